"""Exact blocking probabilities, grid blockings, Stirling tails and the factorial-free approximation."""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple

import mpmath
import numpy as np
from scipy.special import gammaln

from .copula import DiscreteCopula, Permutation

#: Blockings with sparsity below this are flagged when approximated.
LOW_SPARSITY = 8

#: Largest ``n`` for which probabilities are returned as exact rationals by default.
EXACT_LIMIT = 2000


class InvalidBlockingError(ValueError):
    pass


@dataclass(frozen=True)
class Blocking:
    n: int
    a: int
    b: int
    c: int

    def __post_init__(self):
        n, a, b, c = self.n, self.a, self.b, self.c
        if n <= 0:
            raise InvalidBlockingError(f"n = {n} must be positive")
        if not (0 <= a <= n and 0 <= b <= n):
            raise InvalidBlockingError(f"need 0 <= a, b <= n, got a={a}, b={b}, n={n}")
        # every box count must be nonnegative, so the lower limit is a+b-n
        if not (max(0, a + b - n) <= c <= min(a, b)):
            raise InvalidBlockingError(
                f"(n,a,b,c)=({n},{a},{b},{c}) violates max(0, a+b-n) <= c <= min(a, b)"
            )

    @property
    def adot(self) -> tuple[int, int]:
        return (self.a, self.n - self.a)

    @property
    def bdot(self) -> tuple[int, int]:
        return (self.b, self.n - self.b)

    @property
    def cdot(self) -> tuple[tuple[int, int], tuple[int, int]]:
        n, a, b, c = self.n, self.a, self.b, self.c
        return ((c, a - c), (b - c, n - a - b + c))

    def as_grid(self) -> "GridBlocking":
        return GridBlocking(GridSpec(self.n, (0, self.a, self.n), (0, self.b, self.n)), self.cdot)


@dataclass(frozen=True)
class GridSpec:
    n: int
    a: tuple[int, ...]
    b: tuple[int, ...]

    def __post_init__(self):
        a = tuple(int(x) for x in self.a)
        b = tuple(int(x) for x in self.b)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        for name, seq in (("a", a), ("b", b)):
            if len(seq) < 2 or seq[0] != 0 or seq[-1] != self.n:
                raise InvalidBlockingError(f"{name} must run from 0 to n={self.n}, got {seq}")
            if any(x >= y for x, y in zip(seq, seq[1:])):
                raise InvalidBlockingError(f"{name} must be strictly increasing, got {seq}")

    @property
    def I(self) -> int:  # noqa: E743
        return len(self.a) - 1

    @property
    def J(self) -> int:
        return len(self.b) - 1

    @property
    def adot(self) -> np.ndarray:
        return np.diff(np.asarray(self.a, dtype=np.int64))

    @property
    def bdot(self) -> np.ndarray:
        return np.diff(np.asarray(self.b, dtype=np.int64))

    @classmethod
    def pointwise(cls, n: int, a: int, b: int) -> "GridSpec":
        """The 2x2 grid cut at ``(a, b)``; needs ``0 < a, b < n``."""
        return cls(n, (0, a, n), (0, b, n))


@dataclass(frozen=True)
class GridBlocking:
    grid: GridSpec
    cdot: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        cd = np.asarray(self.cdot, dtype=np.int64)
        g = self.grid
        if cd.shape != (g.I, g.J):
            raise InvalidBlockingError(f"counts have shape {cd.shape}, grid is {g.I}x{g.J}")
        if (cd < 0).any():
            i, j = np.argwhere(cd < 0)[0]
            raise InvalidBlockingError(f"negative box count at ({i + 1},{j + 1})")
        rows = cd.sum(axis=1)
        cols = cd.sum(axis=0)
        if not np.array_equal(rows, g.adot):
            i = int(np.flatnonzero(rows != g.adot)[0])
            raise InvalidBlockingError(f"row band {i + 1} holds {rows[i]} ones, needs {g.adot[i]}")
        if not np.array_equal(cols, g.bdot):
            j = int(np.flatnonzero(cols != g.bdot)[0])
            raise InvalidBlockingError(f"wide column {j + 1} holds {cols[j]} ones, needs {g.bdot[j]}")
        object.__setattr__(self, "cdot", tuple(tuple(int(x) for x in r) for r in cd))

    @property
    def counts(self) -> np.ndarray:
        return np.asarray(self.cdot, dtype=np.int64)

    def cumulative(self) -> np.ndarray:
        """``c[i, j] = C[a_i, b_j]``, indices ``0..I`` by ``0..J``."""
        g = self.grid
        c = np.zeros((g.I + 1, g.J + 1), dtype=np.int64)
        c[1:, 1:] = self.counts.cumsum(axis=0).cumsum(axis=1)
        return c

    @classmethod
    def from_cumulative(cls, grid: GridSpec, c) -> "GridBlocking":
        c = np.asarray(c, dtype=np.int64)
        if c.shape != (grid.I + 1, grid.J + 1):
            raise InvalidBlockingError(f"cumulative table has shape {c.shape}")
        if (c[0, :] != 0).any() or (c[:, 0] != 0).any():
            raise InvalidBlockingError("cumulative table must vanish on row 0 and column 0")
        if not np.array_equal(c[:, -1], np.asarray(grid.a)) or not np.array_equal(c[-1, :], np.asarray(grid.b)):
            raise InvalidBlockingError("cumulative table must end with c[i,J] = a_i and c[I,j] = b_j")
        cd = c[1:, 1:] - c[:-1, 1:] - c[1:, :-1] + c[:-1, :-1]
        return cls(grid, tuple(map(tuple, cd.tolist())))


def box_counts(p, grid: GridSpec) -> np.ndarray:
    """Number of ones of the permutation in each box of ``grid``."""
    if isinstance(p, DiscreteCopula):
        cum = p.on_grid(grid.a, grid.b)
    else:
        sigma0 = p.zero_based() if isinstance(p, Permutation) else np.asarray(p, dtype=np.int64)
        cum = DiscreteCopula(sigma0).on_grid(grid.a, grid.b)
    return cum[1:, 1:] - cum[:-1, 1:] - cum[1:, :-1] + cum[:-1, :-1]


def blocking_prob_exact(b: Blocking) -> Fraction:
    n, a, bb, c = b.n, b.a, b.b, b.c
    return Fraction(math.comb(bb, c) * math.comb(n - bb, a - c), math.comb(n, a))


def expected_count(n: int, a: int, b: int) -> Fraction:
    if not (0 <= a <= n and 0 <= b <= n):
        raise ValueError(f"need 0 <= a, b <= n, got a={a}, b={b}, n={n}")
    return Fraction(a * b, n)


def grid_blocking_prob_exact(gb: GridBlocking) -> Fraction:
    fact = math.factorial
    num = 1
    for k in gb.grid.adot:
        num *= fact(int(k))
    for k in gb.grid.bdot:
        num *= fact(int(k))
    den = fact(gb.grid.n)
    for row in gb.cdot:
        for k in row:
            den *= fact(k)
    return Fraction(num, den)


def rect_prob(n: int, a1: int, a2: int, b1: int, b2: int, c: int) -> Fraction:
    """Probability of exactly ``c`` ones in rows ``a1+1..a2`` and columns ``b1+1..b2``.

    By cyclic invariance this is the corner probability for an
    ``(a2-a1) x (b2-b1)`` block; impossible counts have probability 0.
    """
    if not (0 < a1 < a2 < n and 0 < b1 < b2 < n):
        raise ValueError(f"need 0 < a1 < a2 < n and 0 < b1 < b2 < n, got {(a1, a2, b1, b2)} with n={n}")
    a, b = a2 - a1, b2 - b1
    if not (max(0, a + b - n) <= c <= min(a, b)):
        return Fraction(0)
    return blocking_prob_exact(Blocking(n, a, b, c))


def successive_ratio(n: int, a: int, b: int, c: int) -> Fraction:
    """``P(n,a,b,c+1) / P(n,a,b,c)``; decreasing in ``c``."""
    return Fraction((a - c) * (b - c), (c + 1) * (n - a - b + c + 1))


# -- log-factorials --------------------------------------------------------

_TABLE_CAP = 10**7
_table = np.zeros(1)
_table_lock = threading.Lock()


def log_factorial(k):
    """``log(k!)`` for integers (scalars or arrays), from a lazily grown cached table."""
    global _table
    k = np.asarray(k, dtype=np.int64)
    if k.size and k.min() < 0:
        raise ValueError("log_factorial needs k >= 0")
    top = int(k.max()) if k.size else 0
    if top > _TABLE_CAP:
        return gammaln(k + 1.0)
    if top >= len(_table):
        with _table_lock:
            if top >= len(_table):
                size = min(_TABLE_CAP + 1, max(2 * len(_table), top + 1, 1024))
                _table = gammaln(np.arange(size, dtype=np.float64) + 1.0)
    return _table[k]


class StirlingTerms(NamedTuple):
    log_factorial: float
    tail: float | None


def stirling_log_factorial(k: int) -> StirlingTerms:
    """``log(k!)`` and the Stirling tail ``st(k)`` computed at 40 significant digits.

    ``k = 0`` returns ``log(0!) = 0`` with ``tail=None`` (undefined).
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    if k == 0:
        return StirlingTerms(0.0, None)
    with mpmath.workdps(40):
        kk = mpmath.mpf(k)
        lf = mpmath.loggamma(kk + 1)
        main = kk * mpmath.log(kk) - kk + mpmath.log(kk) / 2 + mpmath.log(2 * mpmath.pi) / 2
        return StirlingTerms(float(lf), float(lf - main))


# -- log-space probabilities and the factorial-free approximation ----------------


class _Margins(NamedTuple):
    n: int
    adot: np.ndarray
    bdot: np.ndarray
    counts: np.ndarray


def _margins(b) -> _Margins:
    """Band sizes and box counts; a pointwise blocking keeps its empty bands when ``a`` or ``b`` is 0 or ``n``."""
    if isinstance(b, Blocking):
        return _Margins(b.n, np.array(b.adot), np.array(b.bdot), np.array(b.cdot, dtype=np.int64))
    if isinstance(b, GridBlocking):
        return _Margins(b.grid.n, b.grid.adot, b.grid.bdot, b.counts)
    raise TypeError(f"expected Blocking or GridBlocking, got {type(b).__name__}")


def log_prob(b) -> float:
    """``log P`` for a pointwise or grid blocking, in floating point (any ``n``)."""
    m = _margins(b)
    terms = list(log_factorial(m.adot)) + list(log_factorial(m.bdot))
    terms.append(-float(log_factorial(m.n)))
    terms.extend(-log_factorial(m.counts.ravel()))
    return math.fsum(terms)


def prob(b, exact: bool | None = None):
    """Blocking probability: a :class:`Fraction` when ``exact`` (default for n <= EXACT_LIMIT), else a float."""
    m = _margins(b)
    if exact is None:
        exact = m.n <= EXACT_LIMIT
    if exact:
        if isinstance(b, Blocking):
            return blocking_prob_exact(b)
        return grid_blocking_prob_exact(b)
    return math.exp(log_prob(b))


def sparsity(b) -> int:
    return int(_margins(b).counts.min())


def _xl(t):
    t = np.asarray(t, dtype=float)
    return np.where(t > 0, t * np.log(np.where(t > 0, t, 1.0)), 0.0)


class Approximation(NamedTuple):
    log_p: float
    p: float
    sparsity: int
    low_sparsity: bool


def factorial_free_approx(b) -> Approximation:
    """The Stirling-based approximation of the blocking probability, evaluated in log form.

    Uses the centered form ``-n sum a_i b_j xl(1 + t_ij)`` with ``1 + t_ij = c_ij / (a_i b_j)``
    (all quantities rescaled by ``n``), which avoids cancelling ``n log n`` sized terms.
    """
    m = _margins(b)
    lam = int(m.counts.min())
    if lam <= 0:
        raise ValueError("factorial-free approximation needs every box count > 0 (sparsity 0)")
    n = m.n
    ah = m.adot / n
    bh = m.bdot / n
    ch = m.counts / n
    prod = np.outer(ah, bh)
    t = ch / prod - 1.0
    xl1 = (1.0 + t) * np.log1p(t)
    log_ca = float(np.log(ah).sum())
    log_cb = float(np.log(bh).sum())
    log_d = float(np.log(ch).sum())
    dim = (len(ah) - 1) * (len(bh) - 1)
    log_p = math.fsum(
        [0.5 * (log_ca + log_cb - log_d), -0.5 * dim * math.log(2 * math.pi * n)]
        + list((-n * prod * xl1).ravel())
    )
    return Approximation(log_p, math.exp(log_p), lam, lam < LOW_SPARSITY)


def factorial_free_approx_direct(b) -> float:
    """The same approximation from the uncentered ``xl`` sums; used as a cross-check."""
    m = _margins(b)
    n = m.n
    ah = m.adot / n
    bh = m.bdot / n
    ch = m.counts / n
    dim = (len(ah) - 1) * (len(bh) - 1)
    return (
        0.5 * (np.log(ah).sum() + np.log(bh).sum() - np.log(ch).sum())
        - 0.5 * dim * math.log(2 * math.pi * n)
        + n * (_xl(ah).sum() + _xl(bh).sum() - _xl(ch).sum())
    )
