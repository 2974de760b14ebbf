"""Hard assignments: Hungarian algorithm, brute-force oracle and permutation helpers.

A hard permutation is an integer array ``perm`` with ``perm[i]`` the position
(column) assigned to element (row) ``i``.  Among optimal assignments, the
lexicographically smallest ``perm`` is returned: lowest row first, each row
taking its lowest feasible column.
"""

from __future__ import annotations

import itertools

import numpy as np

BRUTE_FORCE_MAX_N = 8


def _as_cost(cost) -> np.ndarray:
    c = np.asarray(getattr(cost, "data", cost), dtype=np.float64)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ValueError(f"assignment needs a square matrix, got shape {c.shape}")
    if not np.all(np.isfinite(c)):
        raise ValueError("assignment costs must be finite")
    return c


def assignment_cost(cost, perm) -> float:
    c = _as_cost(cost)
    return float(sum(c[i, j] for i, j in enumerate(perm)))


def _shortest_augmenting(c: np.ndarray):
    """O(n^3) primal-dual Hungarian method; returns (perm, u, v)."""
    n = c.shape[0]
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    owner = np.zeros(n + 1, dtype=np.int64)  # row (1-based) holding column j, 0 = free
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        owner[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = owner[j0]
            free = ~used[1:]
            reduced = c[i0 - 1] - u[i0] - v[1:]
            better = free & (reduced < minv[1:])
            minv[1:][better] = reduced[better]
            way[1:][better] = j0
            masked = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(masked)) + 1
            delta = masked[j1 - 1]
            u[owner[used]] += delta
            v[used] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if owner[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            owner[j0] = owner[j1]
            j0 = j1
    perm = np.empty(n, dtype=np.int64)
    perm[owner[1:] - 1] = np.arange(n)
    return perm, u[1:], v[1:]


def _lexicographic_tight(tight: np.ndarray, perm: np.ndarray) -> np.ndarray:
    """Smallest-lexicographic perfect matching inside the tight-edge graph."""
    n = len(perm)
    perm = perm.copy()
    owner = np.empty(n, dtype=np.int64)
    owner[perm] = np.arange(n)
    col_fixed = np.zeros(n, dtype=bool)
    for i in range(n):
        for c in np.flatnonzero(tight[i] & ~col_fixed):
            if c >= perm[i]:
                break
            path = _reroute(tight, perm, owner, col_fixed, i, c)
            if path is not None:
                for row, col in path:
                    perm[row] = col
                    owner[col] = row
                perm[i] = c
                owner[c] = i
                break
        col_fixed[perm[i]] = True
    return perm


def _reroute(tight, perm, owner, col_fixed, i, c):
    """Alternating path freeing column ``c`` for row ``i``.

    The row currently holding ``c`` must move, ending on ``perm[i]``; rows
    before ``i`` and their columns stay fixed.  Returns the list of
    (row, new column) moves or None.
    """
    goal = perm[i]
    start = owner[c]
    parent = {start: None}  # row -> (previous row, column taken)
    frontier = [start]
    seen_cols = {c}
    while frontier:
        nxt = []
        for row in frontier:
            for col in np.flatnonzero(tight[row] & ~col_fixed):
                if col in seen_cols:
                    continue
                seen_cols.add(col)
                if col == goal:
                    moves = [(row, col)]
                    r = row
                    while parent[r] is not None:
                        prev, taken = parent[r]
                        moves.append((prev, taken))
                        r = prev
                    return moves
                nrow = owner[col]
                if nrow == i or nrow in parent:
                    continue
                parent[nrow] = (row, col)
                nxt.append(nrow)
        frontier = nxt
    return None


def hungarian(cost) -> np.ndarray:
    """Minimum-cost assignment of rows to columns."""
    c = _as_cost(cost)
    n = c.shape[0]
    if n == 0:
        return np.empty(0, dtype=np.int64)
    perm, u, v = _shortest_augmenting(c)
    scale = max(1.0, float(np.abs(c).max()))
    tight = (c - u[:, None] - v[None, :]) <= 1e-11 * scale
    tight[np.arange(n), perm] = True
    best = _lexicographic_tight(tight, perm)
    # the tolerance may admit edges that are worse by less than rounding noise
    if assignment_cost(c, best) > assignment_cost(c, perm):
        return perm
    return best


def brute_force_assignment(cost) -> np.ndarray:
    c = _as_cost(cost)
    n = c.shape[0]
    if n > BRUTE_FORCE_MAX_N:
        raise ValueError(f"brute force limited to N <= {BRUTE_FORCE_MAX_N}, got {n}")
    best, best_perm = np.inf, None
    rows = range(n)
    for perm in itertools.permutations(range(n)):
        total = sum(c[i, perm[i]] for i in rows)
        if total < best:
            best, best_perm = total, perm
    return np.array(best_perm, dtype=np.int64)


def round_soft(p) -> np.ndarray:
    """Hard permutation maximising the total soft weight (Hungarian on ``-P``)."""
    a = _as_cost(getattr(p, "post", p))
    n = a.shape[0]
    # With columns summing to 1, a row argmax above 1/2 that forms a bijection
    # is the unique optimum, so the solver can be skipped.
    arg = a.argmax(axis=1)
    if (n and np.all(a[np.arange(n), arg] > 0.5 + 1e-9)
            and np.unique(arg).size == n
            and np.all(np.abs(a.sum(axis=0) - 1.0) < 1e-9)
            and np.all(a >= 0)):
        return arg.astype(np.int64)
    return hungarian(-a)


def validate(perm) -> np.ndarray:
    perm = np.asarray(perm, dtype=np.int64)
    if perm.ndim != 1 or not np.array_equal(np.sort(perm), np.arange(perm.size)):
        raise ValueError("not a permutation")
    return perm


def apply(perm, x) -> np.ndarray:
    """Place element ``i`` of ``x`` at position ``perm[i]`` (same as ``P^T x``)."""
    perm = validate(perm)
    x = np.asarray(x)
    if x.shape[0] != perm.size:
        raise ValueError(f"permutation of length {perm.size} applied to {x.shape[0]} rows")
    out = np.empty_like(x)
    out[perm] = x
    return out


def invert(perm) -> np.ndarray:
    perm = validate(perm)
    inv = np.empty_like(perm)
    inv[perm] = np.arange(perm.size)
    return inv


def compose(first, second) -> np.ndarray:
    """Permutation equal to applying ``first`` then ``second``."""
    first, second = validate(first), validate(second)
    if first.size != second.size:
        raise ValueError("cannot compose permutations of different lengths")
    return second[first]


def to_matrix(perm) -> np.ndarray:
    perm = validate(perm)
    m = np.zeros((perm.size, perm.size))
    m[np.arange(perm.size), perm] = 1.0
    return m
