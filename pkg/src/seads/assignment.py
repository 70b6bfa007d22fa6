"""Hungarian method for rectangular linear sum assignment (minimisation).

Shortest-augmenting-path formulation with row/column potentials, O(n^2 m).
Rows are inserted in ascending order and the column scan keeps the lowest
index on ties, so results are deterministic.
"""

from __future__ import annotations

import numba
import numpy as np


@numba.njit(cache=True)
def _solve(cost):
    n, m = cost.shape
    inf = np.inf
    # column 0 is virtual and seeds each augmentation; rows are 1-based
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    owner = np.zeros(m + 1, dtype=np.int64)
    way = np.zeros(m + 1, dtype=np.int64)
    minv = np.empty(m + 1)
    used = np.empty(m + 1, dtype=np.bool_)
    for i in range(1, n + 1):
        owner[0] = i
        j0 = 0
        minv[:] = inf
        used[:] = False
        while True:
            used[j0] = True
            i0 = owner[j0]
            delta = inf
            j1 = -1
            for j in range(1, m + 1):
                if not used[j]:
                    cur = cost[i0 - 1, j - 1] - u[i0] - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(m + 1):
                if used[j]:
                    u[owner[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if owner[j0] == 0:
                break
        while j0 != 0:
            j1 = way[j0]
            owner[j0] = owner[j1]
            j0 = j1

    col = np.empty(n, dtype=np.int64)
    for j in range(1, m + 1):
        if owner[j] != 0:
            col[owner[j] - 1] = j - 1
    return col


def hungarian(cost: np.ndarray) -> np.ndarray:
    """Return ``col[i]``, the column assigned to row ``i``, minimising total cost.

    Requires ``n_rows <= n_cols`` and finite costs.
    """
    cost = np.ascontiguousarray(cost, dtype=np.float64)
    if cost.ndim != 2:
        raise ValueError("cost must be a matrix")
    n, m = cost.shape
    if n > m:
        raise ValueError("need at least as many columns as rows")
    if not np.all(np.isfinite(cost)):
        raise ValueError("costs must be finite")
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    return _solve(cost)


def assignment_cost(cost: np.ndarray, col: np.ndarray) -> float:
    return float(np.asarray(cost)[np.arange(len(col)), col].sum())
