"""Training loop, evaluation and checkpoint I/O for the sorting and mosaic tasks."""

from __future__ import annotations

import csv
import io
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad
from ..assignment import apply, round_soft
from ..perm_optim import ALTERNATIVE, grid_structure, sequence_structure
from . import checkpoint as ckpt_io
from .config import TrainConfig, format_config, parse_config
from .data import (
    MosaicTask, gen_mosaic_batch, gen_sort_batch, load_mnist_images, shuffle_tiles,
)
from .model import POModel, mse_loss
from .optim import AdamState, adam_step

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass
class EpochLog:
    epoch: int
    mse: float
    eta: float
    seconds: float


@dataclass
class EvalRow:
    lo: float
    hi: float
    exact_acc: float
    hard_mse: float


def _streams(seed: int):
    init, train, evaluation = np.random.SeedSequence(seed).spawn(3)
    return np.random.default_rng(init), np.random.default_rng(train), evaluation


def structure_for(config: TrainConfig):
    if config.task == "sort":
        return sequence_structure(config.n)
    return grid_structure(*config.grid)


def mosaic_task(config: TrainConfig) -> MosaicTask:
    images = None
    if config.source == "mnist":
        if not config.mnist_images:
            raise ValueError("source = mnist needs mnist-images")
        images = load_mnist_images(config.mnist_images)
    rows, cols = config.grid
    return MosaicTask(rows, cols, config.tile_dim, config.source, images, config.embed_hidden)


def build_model(config: TrainConfig, rng: np.random.Generator | None = None) -> POModel:
    if rng is None:
        rng = _streams(config.seed)[0]
    structure = structure_for(config)
    if config.task == "sort":
        element_dim, embed = 1, 0
    else:
        task = mosaic_task(config)
        element_dim = task.feature_dim
        embed = config.embed_hidden if config.source == "mnist" else 0
    return POModel.create(rng, structure, element_dim, hidden=config.hidden, steps=config.T,
                          iterations=config.L, init=config.init_mode, eta=config.eta_init,
                          embed_hidden=embed)


def loss_and_grads(model: POModel, x: np.ndarray, target: np.ndarray, chunk: int):
    """Batch MSE and its gradients, accumulated over micro-batches of ``chunk`` sets."""
    total = x.shape[0]
    grads = {k: np.zeros_like(v) for k, v in model.params.items()}
    loss_sum = 0.0
    for start in range(0, total, chunk):
        stop = min(start + chunk, total)
        with ad.Tape() as tape:
            tensors = model.bind(tape)
            _, y = model.forward(x[start:stop], tensors)
            loss = ad.scale(mse_loss(y, target[start:stop]), (stop - start) / total)
        names = sorted(tensors)
        for name, g in zip(names, tape.gradient(loss, [tensors[k] for k in names])):
            grads[name] += g
        loss_sum += float(loss.data)
    return loss_sum, grads


def _training_data(config: TrainConfig, rng: np.random.Generator, task=None):
    if config.task == "sort":
        b = gen_sort_batch(rng, config.sets, config.n, config.train_interval)
        return b.x, b.target
    b = gen_mosaic_batch(rng, config.sets, task)
    return None, b.target


def train(config: TrainConfig, model: POModel | None = None, progress=None):
    """Train from scratch; return ``(model, epoch_logs)``.

    The log has one row per epoch plus an epoch-0 row holding the initial
    step size and the loss of the first batch before any update.
    """
    init_rng, rng, _ = _streams(config.seed)
    if model is None:
        model = build_model(config, init_rng)
    task = mosaic_task(config) if config.task == "mosaic" else None
    x_all, target_all = _training_data(config, rng, task)
    state = AdamState(lr=config.lr)
    logs: list[EpochLog] = []
    start = time.perf_counter()

    def batches():
        order = rng.permutation(config.sets)
        for s in range(0, config.sets, config.batch):
            idx = order[s:s + config.batch]
            if x_all is not None:
                yield x_all[idx], target_all[idx]
            else:
                mb = shuffle_tiles(rng, target_all[idx])
                yield mb.tiles, mb.target

    for epoch in range(config.epochs + 1):
        if epoch == 0:
            x, target = next(batches()) if config.epochs else (None, None)
            mse = loss_and_grads(model, x, target, config.chunk)[0] if x is not None else math.nan
            logs.append(EpochLog(0, mse, model.eta, time.perf_counter() - start))
            continue
        weighted, count = 0.0, 0
        for x, target in batches():
            loss, grads = loss_and_grads(model, x, target, config.chunk)
            if not math.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise TrainingError(
                    f"non-finite loss or gradient at epoch {epoch}, step {state.step + 1}: "
                    f"loss={loss}, eta={model.eta}"
                )
            adam_step(model.params, grads, state)
            weighted += loss * len(x)
            count += len(x)
        entry = EpochLog(epoch, weighted / count, model.eta, time.perf_counter() - start)
        logs.append(entry)
        log.info("epoch %d mse %.6g eta %.4f (%.1fs)", entry.epoch, entry.mse, entry.eta,
                 entry.seconds)
        if progress is not None:
            progress(entry)
    return model, logs


def _eval_sets(config: TrainConfig, task, seq: np.random.SeedSequence, interval):
    rng = np.random.default_rng(seq)
    if config.task == "sort":
        b = gen_sort_batch(rng, config.eval_sets, config.n, interval)
        return b.x, b.target
    b = gen_mosaic_batch(rng, config.eval_sets, task)
    return b.tiles, b.target


def predict(model: POModel, x: np.ndarray, chunk: int = 512, update: str = ALTERNATIVE):
    """Soft permutations for a batch of sets, computed without recording."""
    out = []
    for s in range(0, x.shape[0], chunk):
        result, _ = model.forward(x[s:s + chunk], update=update)
        out.append(result.permutation.post.data)
    return np.concatenate(out, axis=0)


def hard_outputs(p: np.ndarray, x: np.ndarray, threads: int = 1) -> np.ndarray:
    def one(b):
        return apply(round_soft(p[b]), x[b])

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return np.stack(list(pool.map(one, range(len(x)))))
    return np.stack([one(b) for b in range(len(x))])


def evaluate(model: POModel, config: TrainConfig, threads: int = 1) -> list[EvalRow]:
    """Exact-match accuracy and hard-rounded MSE per evaluation interval (or grid)."""
    if model.structure.n != config.set_size:
        raise ValueError(
            f"checkpoint is for N={model.structure.n}, task has N={config.set_size}"
        )
    _, _, seq = _streams(config.seed)
    task = mosaic_task(config) if config.task == "mosaic" else None
    intervals = config.intervals if config.task == "sort" else ((0.0, 1.0),)
    rows = []
    for child, interval in zip(seq.spawn(len(intervals)), intervals):
        x, target = _eval_sets(config, task, child, interval)
        hard = hard_outputs(predict(model, x, config.chunk), x, threads)
        exact = np.all(hard == target, axis=(1, 2))
        rows.append(EvalRow(interval[0], interval[1], float(exact.mean()),
                            float(np.mean((hard - target) ** 2))))
    return rows


def model_from_checkpoint(ckpt: ckpt_io.Checkpoint) -> tuple[POModel, TrainConfig]:
    config = parse_config(ckpt.config_text, "<checkpoint>")
    model = POModel(dict(ckpt.arrays), structure_for(config), config.T, config.L,
                    config.init_mode)
    return model, config


def save_model(path, model: POModel, config: TrainConfig) -> None:
    ckpt_io.save(path, ckpt_io.Checkpoint(dict(model.params), format_config(config)))


def load_model(path) -> tuple[POModel, TrainConfig]:
    return model_from_checkpoint(ckpt_io.load(path))


def metrics_csv(logs: list[EpochLog]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch", "mse", "eta", "seconds"])
    for e in logs:
        w.writerow([e.epoch, repr(e.mse), repr(e.eta), f"{e.seconds:.3f}"])
    return buf.getvalue()


def eval_csv(rows: list[EvalRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["interval_lo", "interval_hi", "exact_acc", "hard_mse"])
    for r in rows:
        w.writerow([repr(r.lo), repr(r.hi), repr(r.exact_acc), repr(r.hard_mse)])
    return buf.getvalue()
