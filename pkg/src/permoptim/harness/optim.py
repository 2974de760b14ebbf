"""Xavier initialisation and the Adam optimiser over named numpy arrays."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


def xavier_init(shape, seed) -> np.ndarray:
    """Glorot-uniform weights on ``[-a, a]``, ``a = sqrt(6 / (fan_in + fan_out))``.

    ``seed`` may be an int or a ``numpy.random.Generator``.
    """
    if len(shape) != 2:
        raise ValueError(f"xavier_init needs a 2-d shape, got {tuple(shape)}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    bound = math.sqrt(6.0 / (shape[0] + shape[1]))
    return rng.uniform(-bound, bound, size=tuple(shape))


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState) -> None:
    """Bias-corrected Adam update, applied to ``params`` in place."""
    for name, g in grads.items():
        if params[name].shape != np.shape(g):
            raise ValueError(
                f"gradient for {name} has shape {np.shape(g)}, parameter {params[name].shape}"
            )
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for name in sorted(grads):
        g = np.asarray(grads[name], dtype=np.float64)
        m = state.m.get(name, np.zeros_like(g))
        v = state.v.get(name, np.zeros_like(g))
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        state.m[name], state.v[name] = m, v
        params[name] = params[name] - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
