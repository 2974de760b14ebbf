"""Numerical verification suites behind the ``gradcheck`` and ``selftest`` commands.

Each suite returns a list of :class:`Check` results; nothing here raises on a
failed comparison.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

import numpy as np

from . import autodiff as ad
from . import perm_optim as po
from .assignment import assignment_cost, brute_force_assignment, hungarian
from .ordering import ComparisonNet
from .sinkhorn import doubly_stochastic_residual, row_entropy, sinkhorn

OP_TOL = 1e-6
COST_GRAD_TOL = 1e-6
END_TO_END_TOL = 1e-4
QP_TOL = 1e-10


@dataclass
class Check:
    name: str
    value: float
    threshold: float
    passed: bool

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name}: {self.value:.3e} (threshold {self.threshold:.0e})"


def _below(name, value, threshold) -> Check:
    return Check(name, float(value), threshold, bool(value < threshold))


def random_doubly_stochastic(rng: np.random.Generator, n: int, mix: int = 4) -> np.ndarray:
    """Convex combination of random permutation matrices (exactly doubly stochastic)."""
    weights = rng.dirichlet(np.ones(mix))
    p = np.zeros((n, n))
    for w in weights:
        p[np.arange(n), rng.permutation(n)] += w
    return p


def random_antisymmetric(rng: np.random.Generator, n: int) -> np.ndarray:
    a = rng.uniform(-1, 1, (n, n))
    c = a - a.T
    norm = np.linalg.norm(c)
    return c / norm if norm > 0 else c


def random_structure(rng: np.random.Generator, max_n: int):
    if rng.random() < 0.5:
        return po.sequence_structure(int(rng.integers(1, max_n + 1)))
    return po.grid_structure(2, 3)


# -- op-level gradients -----------------------------------------------------

def _op_cases(rng):
    def u(*shape):
        return rng.uniform(-2, 2, shape)

    def pos(*shape):
        return rng.uniform(0.5, 2, shape)

    weight = u(3, 3)
    return [
        ("add", lambda a, b: ad.sum_all((a + b) * weight), [u(3, 3), u(3, 3)]),
        ("add-broadcast", lambda a, b: ad.sum_all((a + b) * weight), [u(3, 3), u(1, 3)]),
        ("sub", lambda a, b: ad.sum_all((a - b) * weight), [u(3, 3), u(3, 1)]),
        ("mul", lambda a, b: ad.sum_all(a * b), [u(3, 3), u(3, 3)]),
        ("div", lambda a, b: ad.sum_all(a / b), [u(3, 3), pos(3, 3)]),
        ("matmul", lambda a, b: ad.sum_all((a @ b) * weight), [u(3, 4), u(4, 3)]),
        ("matmul-batched", lambda a, b: ad.sum_all(ad.square(a @ b)), [u(2, 3, 4), u(4, 2)]),
        ("transpose", lambda a: ad.sum_all(ad.transpose(a) * weight), [u(3, 3)]),
        ("exp", lambda a: ad.sum_all(ad.exp(a) * weight), [u(3, 3)]),
        ("tanh", lambda a: ad.sum_all(ad.tanh(a) * weight), [u(3, 3)]),
        ("relu", lambda a: ad.sum_all(ad.relu(a) * weight), [u(3, 3)]),
        ("negate", lambda a: ad.sum_all(-a * weight), [u(3, 3)]),
        ("scalar-mul", lambda a: ad.sum_all(ad.scale(a, 2.5) * weight), [u(3, 3)]),
        ("sum-rows", lambda a: ad.sum_all(ad.square(ad.sum_rows(a))), [u(3, 3)]),
        ("sum-cols", lambda a: ad.sum_all(ad.square(ad.sum_cols(a))), [u(3, 3)]),
        ("broadcast-row", lambda a: ad.sum_all(ad.broadcast_row(a, 3) * weight), [u(1, 3)]),
        ("broadcast-col", lambda a: ad.sum_all(ad.broadcast_col(a, 3) * weight), [u(3, 1)]),
        ("square", lambda a: ad.sum_all(ad.square(a) * weight), [u(3, 3)]),
        ("sqrt", lambda a: ad.sum_all(ad.sqrt(a) * weight), [pos(3, 3)]),
        ("frobenius-norm", lambda a: ad.sum_all(ad.frobenius_norm(a)), [u(3, 3)]),
        ("take", lambda a: ad.sum_all(ad.square(a[..., 1])), [u(2, 3, 2)]),
        ("reshape", lambda a: ad.sum_all(ad.reshape(a, (3, 3)) * weight), [u(9)]),
        ("sinkhorn", lambda a: ad.sum_all(sinkhorn(a).post * weight), [u(3, 3)]),
    ]


def op_gradient_checks(trials: int = 3, seed: int = 0) -> list[Check]:
    rng = np.random.default_rng(seed)
    worst: dict[str, float] = {}
    for _ in range(trials):
        for name, fn, args in _op_cases(rng):
            err = ad.finite_diff_check(fn, args, 1e-6)
            worst[name] = max(worst.get(name, 0.0), err)
    return [_below(f"op gradient {k}", v, OP_TOL) for k, v in worst.items()]


# -- closed-form cost gradient ----------------------------------------------

def cost_gradient_error(p: np.ndarray, costs, structure, eps: float = 1e-6) -> float:
    """Closed-form gradient vs central differences of the total cost."""
    analytic = po.cost_gradient(p, costs, structure).data
    q = p.copy()
    worst = 0.0
    for idx in np.ndindex(q.shape):
        orig = q[idx]
        q[idx] = orig + eps
        up = float(po.total_cost(q, costs, structure).data)
        q[idx] = orig - eps
        down = float(po.total_cost(q, costs, structure).data)
        q[idx] = orig
        numeric = (up - down) / (2 * eps)
        a = analytic[idx]
        worst = max(worst, abs(a - numeric) / max(1.0, abs(a), abs(numeric)))
    return worst


def cost_gradient_checks(trials: int = 50, seed: int = 1) -> list[Check]:
    """``trials`` random instances of each of a sequence and a 2x3 grid."""
    rng = np.random.default_rng(seed)
    worst = {"sequence": 0.0, "grid": 0.0}
    for _ in range(trials):
        for structure in (po.sequence_structure(int(rng.integers(2, 7))),
                          po.grid_structure(2, 3)):
            p = random_doubly_stochastic(rng, structure.n)
            costs = [random_antisymmetric(rng, structure.n) for _ in range(structure.channels)]
            err = cost_gradient_error(p, costs, structure)
            worst[structure.kind] = max(worst[structure.kind], err)
    return [_below(f"cost gradient ({k})", v, COST_GRAD_TOL) for k, v in worst.items()]


# -- end-to-end -------------------------------------------------------------

def end_to_end_error(seed: int = 2, n: int = 4, hidden: int = 4, steps: int = 2) -> float:
    """Sorting MSE through the unrolled loop vs finite differences, all parameters."""
    rng = np.random.default_rng(seed)
    structure = po.sequence_structure(n)
    x = rng.uniform(0, 1, (3, n, 1))
    target = np.sort(x, axis=1)
    init = [
        rng.uniform(-1, 1, (2, hidden)), rng.uniform(-0.5, 0.5, hidden),
        rng.uniform(-1, 1, (hidden, 1)), rng.uniform(-0.5, 0.5, 1),
        np.array(1.3), rng.uniform(-1, 1, (n, 1)),
    ]

    def loss(w1, b1, w2, b2, eta, la):
        net = ComparisonNet(w1, b1, w2, b2)
        config = po.POConfig(steps, eta, po.LINEAR_ASSIGNMENT)
        y = po.optimise(x, net, structure, config, la).output
        return ad.mean_all(ad.square(y - ad.Tensor(target)))

    return ad.finite_diff_check(loss, init, 1e-6)


def end_to_end_checks(trials: int = 1, seed: int = 2) -> list[Check]:
    worst = max(end_to_end_error(seed + t) for t in range(trials))
    return [_below("end-to-end sorting loss gradient", worst, END_TO_END_TOL)]


def gradcheck_suite(trials: int = 3) -> list[Check]:
    return (op_gradient_checks(trials) + cost_gradient_checks(max(trials, 2) * 10)
            + end_to_end_checks(trials))


# -- self test --------------------------------------------------------------

def qp_checks(trials: int = 100, seed: int = 3) -> list[Check]:
    rng = np.random.default_rng(seed)
    worst, uniform = 0.0, 0.0
    for _ in range(trials):
        s = random_structure(rng, 8)
        costs = [random_antisymmetric(rng, s.n) for _ in range(s.channels)]
        p = random_doubly_stochastic(rng, s.n)
        worst = max(worst, abs(float(po.total_cost(p, costs, s).data) - po.qp_cost(p, costs, s)))
        flat = np.full((s.n, s.n), 1.0 / s.n)
        uniform = max(uniform, abs(float(po.total_cost(flat, costs, s).data)))
    return [_below("total cost vs QP form", worst, QP_TOL),
            _below("uniform permutation cost", uniform, 1e-12)]


def sinkhorn_checks(trials: int = 100, seed: int = 4) -> list[Check]:
    rng = np.random.default_rng(seed)
    col, shift, monotone = 0.0, 0.0, 0
    for _ in range(trials):
        n = int(rng.integers(2, 9))
        pre = rng.uniform(-5, 5, (n, n))
        p4 = sinkhorn(pre, 4).post.data
        col = max(col, float(np.abs(p4.sum(axis=0) - 1).max()))
        shift = max(shift, float(np.abs(sinkhorn(pre + 7.0, 4).post.data - p4).max()))
        if doubly_stochastic_residual(sinkhorn(pre, 8)) > doubly_stochastic_residual(p4):
            monotone += 1
    return [_below("sinkhorn column sums", col, 1e-12),
            _below("sinkhorn shift invariance", shift, 1e-12),
            _below("sinkhorn residual L=8 above L=4 (count)", monotone, 1)]


def hungarian_checks(trials: int = 200, seed: int = 5) -> list[Check]:
    rng = np.random.default_rng(seed)
    mismatches = 0
    for _ in range(trials):
        n = int(rng.integers(1, 8))
        c = rng.uniform(-1, 1, (n, n))
        if assignment_cost(c, hungarian(c)) != assignment_cost(c, brute_force_assignment(c)):
            mismatches += 1
    return [_below("hungarian vs brute force (mismatches)", mismatches, 1)]


def invariance_checks(trials: int = 100, seed: int = 6) -> list[Check]:
    """Output invariance under input reordering, per initialisation mode."""
    rng = np.random.default_rng(seed)
    worst = {po.UNIFORM: 0.0, po.LINEAR_ASSIGNMENT: 0.0}
    for _ in range(trials):
        n = int(rng.integers(1, 7))
        hidden = 5
        net = ComparisonNet(rng.normal(size=(2, hidden)), rng.normal(size=hidden),
                            rng.normal(size=(hidden, 1)), rng.normal(size=1))
        la = rng.normal(size=(n, 1))
        x = rng.uniform(-1, 1, (n, 1))
        perm = rng.permutation(n)
        s = po.sequence_structure(n)
        for init in worst:
            config = po.POConfig(4, 1.0, init)
            y = po.optimise(x, net, s, config, la).output.data
            y_perm = po.optimise(x[perm], net, s, config, la).output.data
            worst[init] = max(worst[init], float(np.abs(y - y_perm).max()))
    return [_below(f"permutation invariance of output ({init} init)", err, 1e-9)
            for init, err in worst.items()]


def degenerate_checks() -> list[Check]:
    net = ComparisonNet.oracle()
    out = po.optimise(np.array([[0.3]]), net, po.sequence_structure(1), po.POConfig()).output
    return [_below("N=1 set reproduced", abs(float(out.data[0, 0]) - 0.3), 1e-12)]


def bundled_checkpoint_path():
    return resources.files("permoptim") / "data" / "tiny_sort.popt"


def entropy_checks(sets: int = 256, seed: int = 7, model=None) -> list[Check]:
    """Mean row entropy of both update modes on a trained sorting model.

    Uses the bundled checkpoint unless ``model`` is given.
    """
    from .harness.train import load_model, predict

    if model is None:
        with resources.as_file(bundled_checkpoint_path()) as path:
            model, _ = load_model(path)
    rng = np.random.default_rng(seed)
    x = rng.uniform(0, 1, (sets, model.structure.n, 1))
    alt = row_entropy(predict(model, x, update=po.ALTERNATIVE))
    full = row_entropy(predict(model, x, update=po.FULL_GRADIENT))
    return [Check(f"row entropy alternative {alt:.4f} < full-gradient {full:.4f}",
                  alt - full, 0.0, alt < full)]


def selftest_suite() -> list[Check]:
    return (qp_checks() + sinkhorn_checks() + hungarian_checks() + invariance_checks()
            + degenerate_checks() + entropy_checks())
