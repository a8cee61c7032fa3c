"""Minimum-cost bipartite assignment (shortest augmenting paths with potentials)."""

from __future__ import annotations

import numpy as np

GATED = 1e6


def hungarian(cost) -> list[tuple[int, int]]:
    """Optimal one-to-one assignment for an n x m cost matrix.

    Returns ``min(n, m)`` (row, col) pairs sorted by row. Rectangular inputs are
    handled by working on the transpose when there are more rows than columns,
    which is equivalent to padding with zero-cost dummy columns.
    """
    c = np.asarray(cost, dtype=np.float64)
    if c.ndim != 2:
        raise ValueError("cost must be a 2-D matrix")
    if c.size == 0:
        return []
    if not np.all(np.isfinite(c)):
        raise ValueError("cost must be finite; gate pairs with a large sentinel instead")
    if c.shape[0] > c.shape[1]:
        return sorted((r, q) for q, r in _solve(c.T))
    return _solve(c)


def _solve(c: np.ndarray) -> list[tuple[int, int]]:
    # rows <= cols; 1-based arrays with column 0 as the virtual source
    n, m = c.shape
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    p = np.zeros(m + 1, dtype=int)  # p[j]: row assigned to column j (1-based, 0 = free)
    way = np.zeros(m + 1, dtype=int)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(m + 1, np.inf)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used[1:]
            cur = c[i0 - 1] - u[i0] - v[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            cand = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(cand)) + 1
            delta = cand[j1 - 1]
            u[p[used]] += delta
            v[used] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    return sorted((int(p[j]) - 1, j - 1) for j in range(1, m + 1) if p[j] != 0)


def assignment_cost(cost, pairs) -> float:
    c = np.asarray(cost, dtype=np.float64)
    return float(sum(c[r, k] for r, k in pairs))


def greedy_assignment(cost, gate: float = np.inf) -> list[tuple[int, int]]:
    """Pairs taken in ascending cost order, each row and column used once, cost <= gate."""
    c = np.asarray(cost, dtype=np.float64)
    if c.size == 0:
        return []
    order = np.argsort(c, axis=None, kind="stable")
    rows, cols = set(), set()
    pairs = []
    for flat in order:
        r, k = divmod(int(flat), c.shape[1])
        if c[r, k] > gate:
            break
        if r in rows or k in cols:
            continue
        rows.add(r)
        cols.add(k)
        pairs.append((r, k))
    return sorted(pairs)
