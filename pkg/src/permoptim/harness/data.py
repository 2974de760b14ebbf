"""Task data: number sets to sort and shuffled tile mosaics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import assignment
from .idx import load_idx


@dataclass(frozen=True)
class SortTask:
    n: int
    train_interval: tuple[float, float] = (0.0, 1.0)
    eval_intervals: tuple[tuple[float, float], ...] = ((0.0, 1.0),)
    sets_per_epoch: int = 2 ** 15
    batch_size: int = 512

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("sorting needs n >= 2")
        for lo, hi in (self.train_interval,) + tuple(self.eval_intervals):
            if not lo < hi:
                raise ValueError(f"empty interval [{lo}, {hi})")


@dataclass(frozen=True)
class MosaicTask:
    rows: int
    cols: int
    tile_dim: int = 4
    source: str = "synthetic"
    images: np.ndarray | None = None  # (count, side, side) in [0, 1] for source="mnist"
    embed_hidden: int = 32

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("grid sides must be >= 1")
        if self.source == "mnist" and self.images is None:
            raise ValueError("mnist mosaics need images")

    @property
    def n(self) -> int:
        return self.rows * self.cols

    @property
    def feature_dim(self) -> int:
        if self.source == "synthetic":
            return self.tile_dim
        side = _padded_side(self.images.shape[1], max(self.rows, self.cols))
        return (side // self.rows) * (side // self.cols)


@dataclass
class SortBatch:
    x: np.ndarray       # (B, N, 1)
    target: np.ndarray  # (B, N, 1), ascending


@dataclass
class MosaicBatch:
    tiles: np.ndarray   # (B, N, D) shuffled
    truth: np.ndarray   # (B, N) hard permutations, apply(truth[b], tiles[b]) == target[b]
    target: np.ndarray  # (B, N, D) in grid (row-major) order


def gen_sort_batch(rng: np.random.Generator, batch: int, n: int,
                   interval: tuple[float, float] = (0.0, 1.0)) -> SortBatch:
    lo, hi = interval
    x = rng.uniform(lo, hi, size=(batch, n, 1))
    return SortBatch(x, np.sort(x, axis=1))


def synthetic_grid_tiles(rng: np.random.Generator, batch: int, rows: int, cols: int,
                         dim: int) -> np.ndarray:
    """Tiles of a synthetic gradient image, in row-major grid order.

    Every feature lies in ``[0, 1]``.  Feature 0 falls in the stratum
    ``[r, r + 1) / rows`` of the tile's grid row and feature 1 in the stratum
    ``[c, c + 1) / cols`` of its column; any further features are uniform
    noise.  The arrangement is therefore recoverable from content alone.
    """
    if dim < 2:
        raise ValueError("synthetic tiles need at least 2 features")
    n = rows * cols
    r, c = np.divmod(np.arange(n), cols)
    tiles = rng.uniform(0.0, 1.0, size=(batch, n, dim))
    tiles[:, :, 0] = (r + tiles[:, :, 0]) / rows
    tiles[:, :, 1] = (c + tiles[:, :, 1]) / cols
    return tiles


def _padded_side(side: int, parts: int) -> int:
    return -(-side // parts) * parts


def image_tiles(images: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """Cut square images into row-major tiles, zero-padding to a divisible side.

    Returns ``(count, rows * cols, tile_h * tile_w)``.
    """
    count, h, w = images.shape
    side = _padded_side(max(h, w), max(rows, cols))
    side_r, side_c = _padded_side(side, rows), _padded_side(side, cols)
    padded = np.zeros((count, side_r, side_c))
    top, left = (side_r - h) // 2, (side_c - w) // 2
    padded[:, top:top + h, left:left + w] = images
    th, tw = side_r // rows, side_c // cols
    tiles = padded.reshape(count, rows, th, cols, tw).transpose(0, 1, 3, 2, 4)
    return tiles.reshape(count, rows * cols, th * tw)


def shuffle_tiles(rng: np.random.Generator, target: np.ndarray,
                  truth: np.ndarray | None = None) -> MosaicBatch:
    batch, n = target.shape[:2]
    if truth is None:
        truth = np.stack([rng.permutation(n) for _ in range(batch)])
    tiles = np.empty_like(target)
    for b in range(batch):
        tiles[b] = target[b][truth[b]]
    return MosaicBatch(tiles, truth.astype(np.int64), target)


def gen_mosaic_batch(rng: np.random.Generator, batch: int, task: MosaicTask,
                     truth: np.ndarray | None = None) -> MosaicBatch:
    if task.source == "synthetic":
        target = synthetic_grid_tiles(rng, batch, task.rows, task.cols, task.tile_dim)
    else:
        idx = rng.integers(0, task.images.shape[0], size=batch)
        target = image_tiles(task.images[idx], task.rows, task.cols)
    return shuffle_tiles(rng, target, truth)


def load_mnist_images(path) -> np.ndarray:
    images = load_idx(path)
    if images.ndim != 3:
        raise ValueError(f"{path} is not an IDX image file")
    return images


def check_mosaic_batch(b: MosaicBatch) -> bool:
    return all(
        np.array_equal(assignment.apply(b.truth[i], b.tiles[i]), b.target[i])
        for i in range(len(b.truth))
    )
