"""Permutation optimisation: total cost, its gradient and the unrolled inner loop.

Soft permutations are stored with elements as rows and output positions as
columns, so ``P[i, k]`` is the weight of element ``i`` at position ``k`` and
the permuted output is ``Y = P^T X``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .ordering import ComparisonNet, pairwise_costs
from .sinkhorn import DEFAULT_ITERATIONS, SoftPermutation, sinkhorn

UNIFORM = "uniform"
LINEAR_ASSIGNMENT = "linear-assignment"
ALTERNATIVE = "alternative"
FULL_GRADIENT = "full-gradient"

QP_MAX_N = 16


@dataclass(frozen=True)
class PositionStructure:
    """Antisymmetric sign matrices saying which positions precede which.

    ``matrices[m][k, k']`` is +1 when position ``k`` comes before ``k'`` in
    the chain compared by cost channel ``m``, -1 when after, 0 otherwise.
    """

    kind: str
    rows: int
    cols: int
    matrices: tuple[np.ndarray, ...] = field(repr=False)

    @property
    def n(self) -> int:
        return self.rows * self.cols

    @property
    def channels(self) -> int:
        return len(self.matrices)


def _sign_chain(n: int) -> np.ndarray:
    idx = np.arange(n)
    return np.sign(idx[None, :] - idx[:, None]).astype(np.float64)


def sequence_structure(n: int) -> PositionStructure:
    if n < 1:
        raise ValueError("sequence length must be >= 1")
    return PositionStructure("sequence", 1, n, (_sign_chain(n),))


def grid_structure(rows: int, cols: int, n: int | None = None) -> PositionStructure:
    """Row-major grid; channel 0 orders within rows, channel 1 within columns."""
    if rows < 1 or cols < 1:
        raise ValueError("grid sides must be >= 1")
    if n is not None and n != rows * cols:
        raise ValueError(f"grid {rows}x{cols} holds {rows * cols} positions, not {n}")
    r, c = np.divmod(np.arange(rows * cols), cols)
    same_row = r[:, None] == r[None, :]
    same_col = c[:, None] == c[None, :]
    along_row = np.where(same_row, np.sign(c[None, :] - c[:, None]), 0).astype(np.float64)
    along_col = np.where(same_col, np.sign(r[None, :] - r[:, None]), 0).astype(np.float64)
    return PositionStructure("grid", rows, cols, (along_row, along_col))


def position_structure(kind: str, n: int | None = None, rows: int | None = None,
                       cols: int | None = None) -> PositionStructure:
    if kind == "sequence":
        return sequence_structure(n)
    if kind == "grid":
        return grid_structure(rows, cols, n)
    raise ValueError(f"unknown structure kind {kind!r}")


def _check(p: Tensor, costs: Sequence[Tensor], structure: PositionStructure) -> None:
    n = structure.n
    if p.shape[-2:] != (n, n):
        raise ad.ShapeError(f"permutation shape {p.shape} does not fit {n} positions")
    if len(costs) != structure.channels:
        raise ad.ShapeError(
            f"{len(costs)} cost channels for a structure with {structure.channels}"
        )
    for c in costs:
        if c.shape[-2:] != (n, n):
            raise ad.ShapeError(f"cost shape {c.shape} does not match permutation {p.shape}")


def _post(p) -> Tensor:
    return p.post if isinstance(p, SoftPermutation) else ad.as_tensor(p)


def total_cost(p, costs: Sequence, structure: PositionStructure) -> Tensor:
    """``sum_m <C_m, P O_m P^T>`` for each matrix in the batch."""
    p = _post(p)
    costs = [ad.as_tensor(c) for c in costs]
    _check(p, costs, structure)
    pt = ad.transpose(p)
    total = None
    for c, o in zip(costs, structure.matrices):
        term = ad.sum_axes(c * (p @ Tensor(o) @ pt), (-2, -1))
        total = term if total is None else total + term
    return total


def cost_gradient(p, costs: Sequence, structure: PositionStructure) -> Tensor:
    """Closed-form ``d total_cost / dP = sum_m 2 C_m P O_m^T``.

    Valid for antisymmetric ``C_m`` and ``O_m``.
    """
    p = _post(p)
    costs = [ad.as_tensor(c) for c in costs]
    _check(p, costs, structure)
    grad = None
    for c, o in zip(costs, structure.matrices):
        term = ad.scale(c @ (p @ Tensor(o.T)), 2.0)
        grad = term if grad is None else grad + term
    return grad


def qp_cost(p, costs: Sequence, structure: PositionStructure) -> float:
    """Total cost as ``p^T Q p`` with an explicit ``N^2 x N^2`` matrix ``Q``."""
    p = np.asarray(_post(p).data)
    n = p.shape[-1]
    if n > QP_MAX_N:
        raise ValueError(f"qp_cost builds an N^4 matrix; refusing N={n} > {QP_MAX_N}")
    if p.ndim != 2:
        raise ad.ShapeError(f"qp_cost takes a single matrix, got shape {p.shape}")
    q = np.zeros((n * n, n * n))
    for c, o in zip(costs, structure.matrices):
        q += np.kron(np.asarray(ad.as_tensor(c).data), o)
    flat = p.reshape(-1)
    return float(flat @ q @ flat)


@dataclass
class POConfig:
    steps: int = 6
    eta: Tensor | float = 1.0
    init: str = UNIFORM
    update: str = ALTERNATIVE
    iterations: int = DEFAULT_ITERATIONS

    def __post_init__(self):
        self.eta = ad.as_tensor(self.eta)
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.iterations < 1:
            raise ValueError("sinkhorn iterations must be >= 1")
        if not np.all(np.isfinite(self.eta.data)):
            raise ValueError("eta must be finite")
        if self.init not in (UNIFORM, LINEAR_ASSIGNMENT):
            raise ValueError(f"unknown init mode {self.init!r}")
        if self.update not in (ALTERNATIVE, FULL_GRADIENT):
            raise ValueError(f"unknown update mode {self.update!r}")


def init_pre_permutation(x, config: POConfig, la_weights=None) -> Tensor:
    """Starting unnormalised permutation: zeros, or ``w_k . x_i`` at ``[i, k]``."""
    x = ad.as_tensor(x)
    n = x.shape[-2]
    if config.init == UNIFORM:
        return Tensor(np.zeros(x.shape[:-2] + (n, n)))
    if la_weights is None:
        raise ValueError("linear-assignment init needs position weights")
    w = ad.as_tensor(la_weights)
    if w.shape[0] != n:
        raise ValueError(f"position weights are for N={w.shape[0]}, input has N={n}")
    return x @ ad.transpose(w)


@dataclass
class POResult:
    permutation: SoftPermutation
    output: Tensor
    costs: list[Tensor]
    trajectory: list[Tensor] | None = None


def optimise(x, net: ComparisonNet, structure: PositionStructure, config: POConfig,
             la_weights=None, keep_trajectory: bool = False) -> POResult:
    """Run ``config.steps`` gradient steps on the unnormalised permutation.

    In alternative mode each step subtracts ``eta * dc/dP`` from the
    pre-Sinkhorn matrix and everything is recorded on the active tape.  In
    full-gradient mode the step uses ``dc/dP~`` through the Sinkhorn operator,
    obtained from a nested tape; that mode is inference-only.
    """
    x = ad.as_tensor(x)
    if x.shape[-2] != structure.n:
        raise ad.ShapeError(f"{x.shape[-2]} elements for {structure.n} positions")
    if config.update == FULL_GRADIENT and ad.active_tape() is not None:
        raise RuntimeError("full-gradient update cannot run while a tape is recording")

    costs = pairwise_costs(x, net)
    pre = init_pre_permutation(x, config, la_weights)
    trajectory = [] if keep_trajectory else None
    for _ in range(config.steps):
        if config.update == ALTERNATIVE:
            p = sinkhorn(pre, config.iterations)
            grad = cost_gradient(p, costs, structure)
        else:
            p, grad = _full_gradient(pre, costs, structure, config.iterations)
        if trajectory is not None:
            trajectory.append(p.post)
        pre = pre - config.eta * grad
    p = sinkhorn(pre, config.iterations)
    if trajectory is not None:
        trajectory.append(p.post)
    y = ad.transpose(p.post) @ x
    return POResult(p, y, costs, trajectory)


def _full_gradient(pre: Tensor, costs, structure, iterations):
    consts = [Tensor(c.data) for c in costs]
    with ad.Tape() as tape:
        leaf = tape.watch(pre.data)
        p = sinkhorn(leaf, iterations)
        cost = ad.sum_all(total_cost(p, consts, structure))
    (grad,) = tape.gradient(cost, [leaf])
    return SoftPermutation(Tensor(pre.data), Tensor(p.post.data)), Tensor(grad)
