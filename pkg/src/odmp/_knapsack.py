"""Compiled 0-1 knapsack kernels."""

import numpy as np
from numba import njit


@njit(cache=True)
def _dantzig_bound(k, value, weight, c, w, cap):
    room = cap - weight
    bound = value
    n = c.shape[0]
    for j in range(k, n):
        if w[j] <= room:
            room -= w[j]
            bound += c[j]
        else:
            bound += c[j] * room / w[j]
            break
    return bound


@njit(cache=True)
def branch_and_bound(c, w, cap):
    """Depth-first branch and bound for ``max c.x  s.t.  w.x <= cap``.

    Items must be pre-sorted by decreasing ``c / w`` with ``c > 0`` and
    ``w > 0``.  Returns ``(best_value, x)``; the incumbent only changes on a
    strict improvement, so the empty set wins ties at zero.
    """
    n = c.shape[0]
    x = np.zeros(n, dtype=np.int8)
    best_x = np.zeros(n, dtype=np.int8)
    best = 0.0
    stage = np.zeros(n + 1, dtype=np.int8)
    vals = np.zeros(n + 1)
    wts = np.zeros(n + 1)
    k = 0
    while k >= 0:
        st = stage[k]
        if st == 0:
            tol = 1e-12 * max(1.0, abs(best))
            if vals[k] > best + tol:
                best = vals[k]
                best_x[:] = x
            if k == n or _dantzig_bound(k, vals[k], wts[k], c, w, cap) <= best + tol:
                k -= 1
                continue
            stage[k] = 1
            if wts[k] + w[k] <= cap:
                x[k] = 1
                vals[k + 1] = vals[k] + c[k]
                wts[k + 1] = wts[k] + w[k]
                stage[k + 1] = 0
                k += 1
                continue
            st = 1
        if st == 1:
            stage[k] = 2
            x[k] = 0
            vals[k + 1] = vals[k]
            wts[k + 1] = wts[k]
            stage[k + 1] = 0
            k += 1
            continue
        x[k] = 0
        k -= 1
    return best, best_x
