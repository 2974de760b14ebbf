"""Small reverse-mode autodiff engine over dense float64 numpy arrays.

Computation is recorded on a :class:`Tape` while it is the active tape
(``with Tape() as tape: ...``).  Leaves are registered with
:meth:`Tape.watch`; every op whose inputs include a tensor tracked on the
active tape appends an entry holding a backward closure.  Arrays may carry
leading batch axes: matrix ops act on the last two axes and elementwise ops
broadcast like numpy.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

_state = threading.local()


class ShapeError(ValueError):
    pass


class DomainError(ValueError):
    pass


def active_tape() -> "Tape | None":
    return getattr(_state, "tape", None)


class Tensor:
    __slots__ = ("data", "node", "tape")
    __array_priority__ = 100

    def __init__(self, data, node: int | None = None, tape: "Tape | None" = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.node = node
        self.tape = tape

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        tag = f", node={self.node}" if self.node is not None else ""
        return f"Tensor({self.data!r}{tag})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __neg__(self):
        return negate(self)

    def __getitem__(self, index):
        return take(self, index)

    @property
    def T(self):
        return transpose(self)


@dataclass
class TapeEntry:
    kind: str
    inputs: tuple[int | None, ...]
    output: int
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]


class Tape:
    """Ordered record of operations for one forward pass."""

    def __init__(self):
        self.entries: list[TapeEntry] = []
        self._next = 0
        self._leaves: set[int] = set()
        self._prev: Tape | None = None

    def __enter__(self) -> "Tape":
        self._prev = active_tape()
        _state.tape = self
        return self

    def __exit__(self, *exc) -> None:
        _state.tape = self._prev
        self._prev = None

    def _new_node(self) -> int:
        node = self._next
        self._next += 1
        return node

    def watch(self, value) -> Tensor:
        """Register ``value`` as a differentiable leaf on this tape."""
        data = value.data if isinstance(value, Tensor) else value
        node = self._new_node()
        self._leaves.add(node)
        return Tensor(np.array(data, dtype=np.float64), node, self)

    def backward(self, loss: Tensor, leaves: Sequence[Tensor]) -> dict[int, Tensor]:
        """Return ``{leaf.node: d loss / d leaf}`` for every requested leaf."""
        if loss.data.size != 1:
            raise ShapeError(f"loss must be scalar, got shape {loss.shape}")
        for leaf in leaves:
            if leaf.tape is not self or leaf.node not in self._leaves:
                raise KeyError(f"leaf {leaf.node} was not recorded on this tape")
        adjoint: dict[int, np.ndarray] = {}
        if loss.tape is self and loss.node is not None:
            adjoint[loss.node] = np.ones_like(loss.data)
            for entry in reversed(self.entries):
                g = adjoint.pop(entry.output, None)
                if g is None:
                    continue
                for node, gi in zip(entry.inputs, entry.backward(g)):
                    if node is None or gi is None:
                        continue
                    if node in adjoint:
                        adjoint[node] = adjoint[node] + gi
                    else:
                        adjoint[node] = gi
        return {
            leaf.node: Tensor(adjoint.get(leaf.node, np.zeros_like(leaf.data)))
            for leaf in leaves
        }

    def gradient(self, loss: Tensor, leaves: Sequence[Tensor]) -> list[np.ndarray]:
        grads = self.backward(loss, leaves)
        return [grads[leaf.node].data for leaf in leaves]


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(kind: str, inputs: Sequence[Tensor], out: np.ndarray, backward) -> Tensor:
    tape = active_tape()
    if tape is not None and any(t.tape is tape for t in inputs):
        node = tape._new_node()
        ids = tuple(t.node if t.tape is tape else None for t in inputs)
        tape.entries.append(TapeEntry(kind, ids, node, backward))
        return Tensor(out, node, tape)
    return Tensor(out)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _check_broadcast(kind: str, a: Tensor, b: Tensor) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{kind}: incompatible shapes {a.shape} and {b.shape}") from None


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("add", a, b)
    sa, sb = a.shape, b.shape
    return _record("add", (a, b), a.data + b.data,
                   lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("sub", a, b)
    sa, sb = a.shape, b.shape
    return _record("sub", (a, b), a.data - b.data,
                   lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("mul", a, b)
    ad, bd = a.data, b.data
    return _record("mul", (a, b), ad * bd,
                   lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("div", a, b)
    ad, bd = a.data, b.data
    if np.any(bd == 0):
        raise DomainError("div: zero denominator")
    out = ad / bd

    def backward(g):
        ga = g / bd
        return _unbroadcast(ga, ad.shape), _unbroadcast(-ga * out, bd.shape)

    return _record("div", (a, b), out, backward)


def scale(a, s: float) -> Tensor:
    a = as_tensor(a)
    s = float(s)
    return _record("scale", (a,), a.data * s, lambda g: (g * s,))


def negate(a) -> Tensor:
    a = as_tensor(a)
    return _record("neg", (a,), -a.data, lambda g: (-g,))


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}") from None
    ad, bd = a.data, b.data

    def backward(g):
        ga = g @ np.swapaxes(bd, -1, -2)
        gb = np.swapaxes(ad, -1, -2) @ g
        return _unbroadcast(ga, ad.shape), _unbroadcast(gb, bd.shape)

    return _record("matmul", (a, b), ad @ bd, backward)


def transpose(a) -> Tensor:
    """Swap the last two axes."""
    a = as_tensor(a)
    if a.ndim < 2:
        raise ShapeError(f"transpose: needs at least 2 dims, got shape {a.shape}")
    return _record("transpose", (a,), np.swapaxes(a.data, -1, -2),
                   lambda g: (np.swapaxes(g, -1, -2),))


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _record("exp", (a,), out, lambda g: (g * out,))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _record("tanh", (a,), out, lambda g: (g * (1.0 - out * out),))


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0  # subgradient 0 at exactly 0
    return _record("relu", (a,), np.where(mask, a.data, 0.0), lambda g: (g * mask,))


def square(a) -> Tensor:
    a = as_tensor(a)
    ad = a.data
    return _record("square", (a,), ad * ad, lambda g: (2.0 * g * ad,))


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    if np.any(a.data < 0):
        raise DomainError("sqrt: negative argument")
    out = np.sqrt(a.data)

    def backward(g):
        with np.errstate(divide="ignore", invalid="ignore"):
            return (np.where(out > 0, g / (2.0 * out), 0.0),)

    return _record("sqrt", (a,), out, backward)


def sum_all(a) -> Tensor:
    a = as_tensor(a)
    shape = a.shape
    return _record("sum_all", (a,), np.asarray(a.data.sum()),
                   lambda g: (np.broadcast_to(g, shape).copy(),))


def sum_axes(a, axis, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    shape = a.shape
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    axes = tuple(ax % len(shape) for ax in axes)
    out = a.data.sum(axis=axes, keepdims=keepdims)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, shape).copy(),)

    return _record("sum", (a,), out, backward)


def sum_rows(a) -> Tensor:
    """Sum along each row (last axis), keeping it as size 1."""
    return sum_axes(a, -1, keepdims=True)


def sum_cols(a) -> Tensor:
    """Sum along each column (second-to-last axis), keeping it as size 1."""
    return sum_axes(a, -2, keepdims=True)


def broadcast_to(a, shape) -> Tensor:
    a = as_tensor(a)
    shape = tuple(shape)
    try:
        out = np.broadcast_to(a.data, shape).copy()
    except ValueError:
        raise ShapeError(f"broadcast: cannot broadcast {a.shape} to {shape}") from None
    src = a.shape
    return _record("broadcast", (a,), out, lambda g: (_unbroadcast(g, src),))


def broadcast_row(a, n_rows: int) -> Tensor:
    """Repeat a ``(..., 1, n)`` row ``n_rows`` times."""
    a = as_tensor(a)
    return broadcast_to(a, a.shape[:-2] + (n_rows, a.shape[-1]))


def broadcast_col(a, n_cols: int) -> Tensor:
    """Repeat a ``(..., n, 1)`` column ``n_cols`` times."""
    a = as_tensor(a)
    return broadcast_to(a, a.shape[:-1] + (n_cols,))


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    src = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {src} to {tuple(shape)}") from None
    return _record("reshape", (a,), out, lambda g: (g.reshape(src),))


def take(a, index) -> Tensor:
    """Basic (slice/integer) indexing."""
    a = as_tensor(a)
    src = a.shape
    out = a.data[index]

    def backward(g):
        full = np.zeros(src)
        full[index] += g
        return (full,)

    return _record("take", (a,), np.array(out), backward)


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    shapes = {t.shape for t in ts}
    if len(shapes) != 1:
        raise ShapeError(f"stack: mismatched shapes {sorted(shapes)}")
    out = np.stack([t.data for t in ts], axis=axis)
    n = len(ts)

    def backward(g):
        return tuple(np.take(g, i, axis=axis) for i in range(n))

    return _record("stack", ts, out, backward)


def mean_all(a) -> Tensor:
    a = as_tensor(a)
    return scale(sum_all(a), 1.0 / a.data.size)


def frobenius_norm(a) -> Tensor:
    """Frobenius norm over the last two axes (kept as size-1 axes)."""
    return sqrt(sum_axes(square(a), (-2, -1), keepdims=True))


def guard_small(a, threshold: float, fill: float = 1.0) -> Tensor:
    """Replace entries below ``threshold`` by the constant ``fill``."""
    a = as_tensor(a)
    keep = a.data >= threshold
    return _record("guard_small", (a,), np.where(keep, a.data, fill), lambda g: (g * keep,))


def constant_like(a: Tensor, value: np.ndarray) -> Tensor:
    return Tensor(np.broadcast_to(value, a.shape))


def finite_diff_check(fn: Callable[..., Tensor], params: Sequence, eps: float = 1e-6) -> float:
    """Max relative error between taped gradients and central differences.

    ``fn`` maps one tensor per parameter to a scalar tensor.  The error for an
    entry is ``|analytic - numeric| / max(1, |analytic|, |numeric|)``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    arrays = [np.array(as_tensor(p).data, dtype=np.float64) for p in params]
    with Tape() as tape:
        leaves = [tape.watch(x) for x in arrays]
        loss = fn(*leaves)
    analytic = tape.gradient(loss, leaves)

    def evaluate() -> float:
        return float(fn(*[Tensor(x) for x in arrays]).data)

    worst = 0.0
    for x, grad in zip(arrays, analytic):
        flat = x.reshape(-1)
        gflat = grad.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + eps
            up = evaluate()
            flat[k] = orig - eps
            down = evaluate()
            flat[k] = orig
            numeric = (up - down) / (2 * eps)
            err = abs(gflat[k] - numeric) / max(1.0, abs(gflat[k]), abs(numeric))
            worst = max(worst, err)
    return worst
