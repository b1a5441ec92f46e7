"""Independent reference implementations used by the tests."""

import numpy as np
from numba import njit


@njit(cache=True)
def _exhaustive(y, levels, h1):
    # depth-first walk over every one of the m^n sequences (no pruning)
    n = y.shape[0]
    m = levels.shape[0]
    idx = np.zeros(n, dtype=np.int64)
    cost = np.zeros(n + 1)
    best_cost = np.inf
    best = np.zeros(n, dtype=np.int8)
    depth = 0
    idx[0] = -1
    while depth >= 0:
        idx[depth] += 1
        if idx[depth] == m:
            depth -= 1
            continue
        prev = levels[idx[depth - 1]] if depth > 0 else 0.0
        r = y[depth] - levels[idx[depth]] - h1 * prev
        cost[depth + 1] = cost[depth] + r * r
        if depth == n - 1:
            if cost[n] < best_cost:
                best_cost = cost[n]
                for i in range(n):
                    best[i] = idx[i]
        else:
            depth += 1
            idx[depth] = -1
    return best


def brute_force_ml(y, h1, levels):
    """Maximum-likelihood sequence for y_k = s_k + h1 s_{k-1} + noise (s_{-1} = 0) by full enumeration."""
    return _exhaustive(np.asarray(y, dtype=float), np.asarray(levels, dtype=float), float(h1))
