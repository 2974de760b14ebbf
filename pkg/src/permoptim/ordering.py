"""Learned antisymmetric pairwise ordering costs."""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

NORM_FLOOR = 1e-30


@dataclass
class ComparisonNet:
    """Two-layer perceptron ``f`` on a concatenated pair of elements.

    ``w1`` has shape ``(2 * element_dim, hidden)``; the first ``element_dim``
    rows act on the first element of the pair.  ``w2`` maps the ReLU hidden
    layer to one output per cost channel.
    """

    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor

    def __post_init__(self):
        for f in fields(self):
            setattr(self, f.name, ad.as_tensor(getattr(self, f.name)))
        if self.w1.shape[0] % 2:
            raise ad.ShapeError(f"w1 input width must be even, got {self.w1.shape}")

    @property
    def element_dim(self) -> int:
        return self.w1.shape[0] // 2

    @property
    def hidden(self) -> int:
        return self.w1.shape[1]

    @property
    def channels(self) -> int:
        return self.w2.shape[1]

    def params(self) -> dict[str, Tensor]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def watch(self, tape: ad.Tape) -> "ComparisonNet":
        return replace(self, **{k: tape.watch(v) for k, v in self.params().items()})

    @classmethod
    def oracle(cls, channels: int = 1) -> "ComparisonNet":
        """Scalar-element net with ``f(a, b) = a`` on every channel."""
        w1 = np.array([[1.0, -1.0], [0.0, 0.0]])
        w2 = np.tile(np.array([[1.0], [-1.0]]), (1, channels))
        return cls(w1, np.zeros(2), w2, np.zeros(channels))


def _pair_outputs(x: Tensor, net: ComparisonNet) -> Tensor:
    # out[..., i, j, m] = f_m(x_i ++ x_j), all pairs in one broadcast
    m = net.element_dim
    if x.shape[-1] != m:
        raise ad.ShapeError(
            f"element dimension {x.shape[-1]} does not match net input width {2 * m}"
        )
    first = x @ net.w1[:m] + net.b1
    second = x @ net.w1[m:]
    lead, n, h = first.shape[:-2], first.shape[-2], first.shape[-1]
    hidden = ad.relu(
        ad.reshape(first, lead + (n, 1, h)) + ad.reshape(second, lead + (1, n, h))
    )
    return hidden @ net.w2 + net.b2


def comparison_matrices(x, net: ComparisonNet) -> list[Tensor]:
    """Unnormalised ``F(x_i, x_j) = f(x_i, x_j) - f(x_j, x_i)`` per channel."""
    x = ad.as_tensor(x)
    if x.ndim < 2:
        raise ad.ShapeError(f"expected elements as rows, got shape {x.shape}")
    out = _pair_outputs(x, net)
    mats = []
    for c in range(net.channels):
        f = out[..., c]
        mats.append(f - ad.transpose(f))
    return mats


def pairwise_costs(x, net: ComparisonNet) -> list[Tensor]:
    """Ordering cost channels, each scaled to unit Frobenius norm.

    A channel whose norm is below ``NORM_FLOOR`` (e.g. all elements equal)
    is returned unscaled, which keeps it at zero instead of NaN.
    """
    costs = []
    for raw in comparison_matrices(x, net):
        norm = ad.guard_small(ad.frobenius_norm(raw), NORM_FLOOR, 1.0)
        costs.append(raw / norm)
    return costs


def dump_comparison_grid(net: ComparisonNet, lo: float, hi: float, steps: int):
    """Evaluate ``F(a, b)`` for ``a, b`` on a uniform grid over ``[lo, hi]``.

    Returns ``(values, grid)`` where ``grid[ia, ib] = F(values[ia], values[ib])``
    for channel 0.
    """
    if net.element_dim != 1:
        raise ValueError(f"comparison grid needs scalar elements, net takes {net.element_dim}")
    if steps < 2:
        raise ValueError("steps must be >= 2")
    values = np.linspace(lo, hi, steps)
    grid = comparison_matrices(values[:, None], net)[0].data
    return values, grid
