"""Compiled inner loops (numba) for the O(n^2) residual scans and the Birkhoff chain."""
from __future__ import annotations

import numba
import numpy as np


@numba.njit(cache=True)
def _residual_stats(sigma0, ps):
    n = sigma0.shape[0]
    row = np.zeros(n + 1, np.int64)
    sums = np.zeros(ps.shape[0])
    best = 0.0
    for a in range(1, n + 1):
        for b in range(sigma0[a - 1] + 1, n + 1):
            row[b] += 1
        for b in range(1, n):
            d = abs(row[b] - a * b / n)
            if d > best:
                best = d
            for k in range(ps.shape[0]):
                q = ps[k]
                if q == 1.0:
                    sums[k] += d
                elif q == 2.0:
                    sums[k] += d * d
                else:
                    sums[k] += d ** q
    return best, sums


def residual_stats(sigma0: np.ndarray, ps=()) -> tuple[float, np.ndarray]:
    """Max of ``|C_ab - ab/n|`` over the whole copula and the sums of its ``p``-th powers.

    ``sigma0`` is the 0-based permutation (row ``i`` holds its 1 in column ``sigma0[i]``).
    Boundary rows and columns vanish and are skipped.
    """
    sigma0 = np.ascontiguousarray(sigma0, dtype=np.int64)
    return _residual_stats(sigma0, np.asarray(ps, dtype=np.float64))


@numba.njit(cache=True)
def _metropolis_run(m, rows1, rows2, cols1, cols2, us):
    for k in range(us.shape[0]):
        i1 = rows1[k]
        i2 = rows2[k]
        j1 = cols1[k]
        j2 = cols2[k]
        lo = -min(m[i1, j1], m[i2, j2])
        hi = min(m[i1, j2], m[i2, j1])
        if hi - lo <= 0.0:
            continue
        d = lo + (hi - lo) * us[k]
        if d < lo:
            d = lo
        elif d > hi:
            d = hi
        m[i1, j1] += d
        m[i2, j2] += d
        m[i1, j2] -= d
        m[i2, j1] -= d


def metropolis_run(m: np.ndarray, rows1, rows2, cols1, cols2, us) -> None:
    """Apply rectangle moves in place; the k-th move uses the k-th entry of each array."""
    _metropolis_run(m, rows1, rows2, cols1, cols2, us)
