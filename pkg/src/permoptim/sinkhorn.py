"""Sinkhorn normalisation and soft-permutation diagnostics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

DEFAULT_ITERATIONS = 4


@dataclass
class SoftPermutation:
    pre: Tensor
    post: Tensor

    @property
    def n(self) -> int:
        return self.post.shape[-1]


def sinkhorn(pre, iterations: int = DEFAULT_ITERATIONS) -> SoftPermutation:
    """Exponentiate, then alternately normalise rows and columns.

    The last two axes hold the square matrix; leading axes are a batch.
    The per-matrix maximum is subtracted before ``exp`` as a constant shift,
    which cancels in the first row normalisation.
    """
    pre = ad.as_tensor(pre)
    if pre.ndim < 2 or pre.shape[-1] != pre.shape[-2]:
        raise ad.ShapeError(f"sinkhorn: expected square matrices, got shape {pre.shape}")
    if iterations < 1:
        raise ValueError("sinkhorn: iterations must be >= 1")
    shift = pre.data.max(axis=(-2, -1), keepdims=True)
    x = ad.exp(pre - shift)
    for _ in range(iterations):
        x = x / ad.sum_rows(x)
        x = x / ad.sum_cols(x)
    return SoftPermutation(pre, x)


def _as_array(p) -> np.ndarray:
    if isinstance(p, SoftPermutation):
        p = p.post
    return np.asarray(p.data if isinstance(p, Tensor) else p, dtype=np.float64)


def row_entropy(p) -> float:
    """Mean Shannon entropy (nats) of the rows, averaged over any batch too."""
    a = _as_array(p)
    if np.any(a < 0):
        raise ValueError("row_entropy: negative entries")
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(a > 0, -a * np.log(a), 0.0)
    return float(terms.sum(axis=-1).mean())


def doubly_stochastic_residual(p) -> float:
    """Largest deviation of any row or column sum from 1."""
    a = _as_array(p)
    rows = np.abs(a.sum(axis=-1) - 1.0)
    cols = np.abs(a.sum(axis=-2) - 1.0)
    return float(max(rows.max(initial=0.0), cols.max(initial=0.0)))
