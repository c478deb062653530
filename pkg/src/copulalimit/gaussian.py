"""Gaussian approximation of blocking probabilities: normalized fluctuations, regularity regimes and gamma-grids."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import NamedTuple

import mpmath
import numpy as np

from .blocking import Blocking, GridBlocking, GridSpec, log_prob

# Exponent denominators above this fall back to high-precision floats.
_MAX_EXACT_DENOMINATOR = 10_000

#: Unscaled lattice coordinates must be this close to integers (relative to their size).
LATTICE_TOL = 1e-10


class NotStandardError(ValueError):
    pass


def as_rational(x) -> Fraction:
    """Exact rational for ints, Fractions, decimal strings and floats (floats read by their shortest repr)."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    if isinstance(x, (float, np.floating)):
        if not math.isfinite(x):
            raise ValueError(f"non-finite exponent {x}")
        return Fraction(repr(float(x)))
    return Fraction(str(x))


def compare_power(x, base: int, expo) -> int:
    """Sign of ``x - base**expo`` for rational ``x >= 0``, integer ``base >= 1`` and rational ``expo``."""
    x = as_rational(x)
    e = as_rational(expo)
    if x < 0 or base < 1:
        raise ValueError("need x >= 0 and base >= 1")
    if base == 1:
        return (x > 1) - (x < 1)
    if x == 0:
        return -1
    p, q = e.numerator, e.denominator
    if q <= _MAX_EXACT_DENOMINATOR and abs(p) * math.log2(base) < 4e6:
        # x^q vs base^p, cleared of denominators
        if p >= 0:
            lhs, rhs = x.numerator ** q, base ** p * x.denominator ** q
        else:
            lhs, rhs = x.numerator ** q * base ** (-p), x.denominator ** q
        return (lhs > rhs) - (lhs < rhs)
    with mpmath.workdps(60):
        d = mpmath.log(mpmath.mpf(x.numerator) / x.denominator) - mpmath.mpf(p) / q * mpmath.log(base)
        if abs(d) < mpmath.mpf(10) ** -50:
            raise ArithmeticError(f"cannot separate {x} from {base}^{e}")
        return 1 if d > 0 else -1


def floor_power(base: int, expo) -> int:
    """``floor(base**expo)`` computed exactly."""
    m = int(math.floor(float(base) ** float(as_rational(expo))))
    while m > 0 and compare_power(m, base, expo) > 0:
        m -= 1
    while compare_power(m + 1, base, expo) <= 0:
        m += 1
    return m


def gaussian_density(C: float, t):
    """Centered normal density with variance ``C``."""
    if not C > 0:
        raise ValueError(f"variance must be positive, got {C}")
    t = np.asarray(t, dtype=float)
    out = np.exp(-t * t / (2 * C)) / math.sqrt(2 * math.pi * C)
    return float(out) if out.ndim == 0 else out


def pointwise_variance(u: float, v: float) -> float:
    return u * (1 - u) * v * (1 - v)


# -- regimes ---------------------------------------------------------------


@dataclass(frozen=True)
class RegularityParams:
    """Exponents ``(alpha, eta)``; membership in the two triangles is decided in exact arithmetic."""

    alpha: object
    eta: object

    @property
    def alpha_q(self) -> Fraction:
        return as_rational(self.alpha)

    @property
    def eta_q(self) -> Fraction:
        return as_rational(self.eta)

    @property
    def in_delta1(self) -> bool:
        a, e = self.alpha_q, self.eta_q
        return 0 < 6 * e < 8 * a - 7 < 1

    @property
    def in_delta2(self) -> bool:
        a, e = self.alpha_q, self.eta_q
        return 0 < 12 * e < 12 * a - 11 < 1


def is_alpha_regular(grid, alpha) -> bool:
    """Every row and column gap strictly exceeds ``n**alpha``.

    ``grid`` is a :class:`GridSpec` or a pointwise triple ``(n, a, b)``; in the pointwise
    case this is ``n**alpha < a, b < n - n**alpha``.
    """
    if isinstance(grid, Blocking):
        grid = (grid.n, grid.a, grid.b)
    if isinstance(grid, GridBlocking):
        grid = grid.grid
    if isinstance(grid, GridSpec):
        n = grid.n
        gaps = list(grid.adot) + list(grid.bdot)
    else:
        n, a, b = grid
        gaps = [a, n - a, b, n - b]
    return all(int(k) > 0 and compare_power(int(k), n, alpha) > 0 for k in gaps)


# -- normalized fluctuations -------------------------------------------------


def lhat(n: int, a: int, b: int, c) -> float:
    """Pointwise fluctuation ``(c - ab/n) / sqrt(n)``."""
    return (c - a * b / n) / math.sqrt(n)


def expected_counts(grid: GridSpec) -> np.ndarray:
    return np.outer(grid.adot, grid.bdot) / grid.n


def tilde_l(gb: GridBlocking) -> np.ndarray:
    """Grid fluctuations ``(c_ij - a_i b_j / n) / sqrt(a_i b_j / n)`` (gaps, not nodes)."""
    e = expected_counts(gb.grid)
    return (gb.counts - e) / np.sqrt(e)


def counts_from_tilde_l(grid: GridSpec, tl) -> np.ndarray:
    """Invert :func:`tilde_l`; raises if ``tl`` is not on the lattice."""
    e = expected_counts(grid)
    raw = e + np.asarray(tl, dtype=float) * np.sqrt(e)
    ints = np.rint(raw)
    bad = np.abs(raw - ints) > LATTICE_TOL * np.maximum(1.0, np.abs(raw))
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise NotStandardError(f"entry ({i + 1},{j + 1}) unscales to {raw[i, j]!r}, not an integer")
    return ints.astype(np.int64)


def in_vg(grid: GridSpec, z, tol: float = 1e-8) -> bool:
    """Both weighted row and column sums of ``z`` vanish."""
    z = np.asarray(z, dtype=float)
    wa = np.sqrt(grid.adot / grid.n)
    wb = np.sqrt(grid.bdot / grid.n)
    return bool(np.abs(wa @ z).max() <= tol and np.abs(z @ wb).max() <= tol)


@dataclass(frozen=True)
class NormalizedBlocking:
    """A grid with fluctuation coordinates: scalar ``lhat`` for 2x2 grids, else the matrix ``tilde_l``."""

    grid: GridSpec
    lhat: object
    counts: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        g = self.grid
        if self.pointwise:
            if (g.I, g.J) != (2, 2):
                raise ValueError("scalar fluctuation needs a 2x2 grid")
            n, a, b = g.n, g.a[1], g.b[1]
            raw = a * b / n + float(self.lhat) * math.sqrt(n)
            c = round(raw)
            if abs(raw - c) > LATTICE_TOL * max(1.0, abs(raw)):
                raise NotStandardError(f"lhat={self.lhat!r} unscales to c={raw!r}, not an integer")
            counts = np.array(Blocking(n, a, b, c).cdot, dtype=np.int64)
        else:
            tl = np.asarray(self.lhat, dtype=float)
            if tl.shape != (g.I, g.J):
                raise ValueError(f"fluctuation shape {tl.shape} does not match grid {g.I}x{g.J}")
            if not in_vg(g, tl, 1e-10 * max(1.0, float(np.abs(tl).max(initial=0.0)))):
                raise NotStandardError("fluctuation matrix violates the weighted zero-sum constraints")
            counts = counts_from_tilde_l(g, tl)
            GridBlocking(g, tuple(map(tuple, counts.tolist())))
        object.__setattr__(self, "counts", counts)

    @property
    def pointwise(self) -> bool:
        return np.ndim(self.lhat) == 0

    @classmethod
    def from_blocking(cls, b) -> "NormalizedBlocking":
        if isinstance(b, Blocking):
            return cls(GridSpec.pointwise(b.n, b.a, b.b), lhat(b.n, b.a, b.b, b.c))
        return cls(b.grid, tilde_l(b))

    def blocking(self):
        g = self.grid
        if self.pointwise:
            return Blocking(g.n, g.a[1], g.b[1], int(self.counts[0, 0]))
        return GridBlocking(g, tuple(map(tuple, self.counts.tolist())))


def _within_window(nb: NormalizedBlocking, eta) -> bool:
    g = nb.grid
    n = g.n
    e = as_rational(eta)
    if nb.pointwise:
        a, b, c = g.a[1], g.b[1], int(nb.counts[0, 0])
        # |lhat| < n^eta  <=>  (nc - ab)^2 < n^(3 + 2 eta)
        return compare_power((n * c - a * b) ** 2, n, 3 + 2 * e) < 0
    for i, ai in enumerate(g.adot):
        for j, bj in enumerate(g.bdot):
            dev = n * int(nb.counts[i, j]) - int(ai) * int(bj)
            # |tilde l| < n^eta  <=>  dev^2 / (n a b) < n^(2 eta)
            if compare_power(Fraction(dev * dev, n * int(ai) * int(bj)), n, 2 * e) >= 0:
                return False
    return True


def standard_reason(nb: NormalizedBlocking, params: RegularityParams) -> str | None:
    """``None`` if ``nb`` is ``(alpha, eta)``-standard, else a short reason."""
    if nb.pointwise and not params.in_delta1:
        raise ValueError(f"(alpha, eta)=({params.alpha}, {params.eta}) is outside 0 < 6eta < 8alpha-7 < 1")
    if not nb.pointwise and not params.in_delta2:
        raise ValueError(f"(alpha, eta)=({params.alpha}, {params.eta}) is outside 0 < 12eta < 12alpha-11 < 1")
    if not is_alpha_regular(nb.grid, params.alpha):
        return f"grid is not {params.alpha}-regular"
    if not _within_window(nb, params.eta):
        return f"fluctuation reaches n^{params.eta}"
    return None


def is_standard(nb: NormalizedBlocking, params: RegularityParams) -> bool:
    return standard_reason(nb, params) is None


# -- Gaussian approximation ---------------------------------------------------


class ApproxRatio(NamedTuple):
    p: float
    approx: float
    ratio: float
    log_p: float
    log_approx: float


def log_gaussian_approx(b) -> float:
    """Log of the Gaussian approximation of a pointwise or grid blocking probability."""
    if isinstance(b, Blocking):
        n = b.n
        C = b.a * (n - b.a) * b.b * (n - b.b) / float(n) ** 4
        lh = lhat(n, b.a, b.b, b.c)
        return -0.5 * math.log(n) - 0.5 * math.log(2 * math.pi * C) - lh * lh / (2 * C)
    g = b.grid
    n = g.n
    log_ca = float(np.log(g.adot / n).sum())
    log_cb = float(np.log(g.bdot / n).sum())
    tl = tilde_l(b)
    dim = (g.I - 1) * (g.J - 1)
    return (
        -0.5 * dim * math.log(2 * math.pi * n)
        - 0.5 * ((g.J - 1) * log_ca + (g.I - 1) * log_cb)
        - 0.5 * float((tl * tl).sum())
    )


def gaussian_approx_ratio(b, params: RegularityParams | None = None) -> ApproxRatio:
    """Exact probability, its Gaussian approximation and their ratio.

    When ``params`` is given the blocking must be ``(alpha, eta)``-standard.
    """
    if params is not None:
        reason = standard_reason(NormalizedBlocking.from_blocking(b), params)
        if reason:
            raise NotStandardError(reason)
    lp = log_prob(b)
    la = log_gaussian_approx(b)
    return ApproxRatio(math.exp(lp), math.exp(la), math.exp(lp - la), lp, la)


def central_ratio(n: int, a: int, b: int) -> float:
    """``sqrt(2 pi C n) P(n, a, b, c)`` with ``c`` the integer nearest to ``ab/n``."""
    c = (2 * a * b + n) // (2 * n)
    C = a * (n - a) * b * (n - b) / float(n) ** 4
    return math.exp(0.5 * math.log(2 * math.pi * C * n) + log_prob(Blocking(n, a, b, c)))


def tail_bound(H: float, n: int | None = None, eta=None) -> float:
    """``exp(-H^2/2) / H``, valid for ``1 < H < 2 n^eta`` (upper limit checked when given)."""
    if not H > 1:
        raise ValueError(f"H must exceed 1, got {H}")
    if n is not None and eta is not None and not H < 2 * n ** float(eta):
        raise ValueError(f"H={H} must be below 2 n^eta = {2 * n ** float(eta)}")
    return math.exp(-H * H / 2) / H


# -- gamma-grids -------------------------------------------------------------


@dataclass(frozen=True)
class GammaGrid:
    n: int
    gamma: object
    m: int

    @property
    def nodes(self) -> tuple[int, ...]:
        n, m = self.n, self.m
        return tuple((2 * i * n + m) // (2 * m) for i in range(m + 1))

    @property
    def grid(self) -> GridSpec:
        return GridSpec(self.n, self.nodes, self.nodes)

    @property
    def asymptotic_regime(self) -> bool:
        g = as_rational(self.gamma)
        return Fraction(5, 6) < g < 1

    @property
    def effective_gamma(self) -> float:
        """The exponent with ``n**gamma == n/m``; gaps are within 1 of this power."""
        return math.log(self.n / self.m) / math.log(self.n)

    def gaps_near_mean(self) -> bool:
        gaps = np.diff(self.nodes)
        return bool((np.abs(gaps * self.m - self.n) < self.m).all())

    def gaps_near_power(self) -> bool:
        """Whether every gap lies in ``(n^gamma - 1, n^gamma + 1)``; false when ``m`` is far from ``n^(1-gamma)``."""
        p = self.n ** float(as_rational(self.gamma))
        return bool((np.abs(np.diff(self.nodes) - p) < 1).all())


def build_gamma_grid(n: int, gamma) -> GammaGrid:
    if not 0 < as_rational(gamma) < 1:
        raise ValueError(f"gamma must be in (0, 1), got {gamma}")
    m = floor_power(n, 1 - as_rational(gamma))
    if m < 2:
        raise ValueError(f"floor(n^(1-gamma)) = {m} for n={n}, gamma={gamma}; need at least 2")
    gg = GammaGrid(n, gamma, m)
    assert gg.gaps_near_mean()
    return gg


def gamma_grid_constant(n: int, m: int, gamma: float) -> float:
    """Log of the lattice cell volume over ``(2 pi)^((m-1)^2 / 2)`` for an m x m grid with gaps ``n**gamma``."""
    g = float(gamma)
    return -((m - 1) ** 2) / 2 * math.log(2 * math.pi) + ((m * m - 1) / 2 - m * (m - 1) * g) * math.log(n)


class GammaGridLogProb(NamedTuple):
    approx: float
    exact: float
    constant: float


def log_prob_gamma_grid(gg: GammaGrid, tl, eta=Fraction(1, 20), gamma=None) -> GammaGridLogProb:
    """Quadratic approximation ``C_n - |tl|^2 / 2`` of the log-probability of a gamma-grid blocking.

    ``tl`` is a fluctuation matrix or a :class:`GridBlocking` on ``gg.grid``.  The constant
    uses ``gg.effective_gamma`` unless ``gamma`` is given.
    """
    g = gg.grid
    if isinstance(tl, GridBlocking):
        gb = tl
    else:
        counts = counts_from_tilde_l(g, tl)
        gb = GridBlocking(g, tuple(map(tuple, counts.tolist())))
    nb = NormalizedBlocking(g, tilde_l(gb))
    if eta is not None and not _within_window(nb, eta):
        raise NotStandardError(f"fluctuation reaches n^{eta}")
    t = tilde_l(gb)
    const = gamma_grid_constant(gg.n, gg.m, gg.effective_gamma if gamma is None else gamma)
    return GammaGridLogProb(const - 0.5 * float((t * t).sum()), log_prob(gb), const)


class LatticePoint(NamedTuple):
    tilde_l: np.ndarray
    counts: np.ndarray


def nearest_lattice_point(z, grid: GridSpec) -> LatticePoint:
    """A lattice point near ``z``: round the leading block, then close the margins.

    Rounds the leading ``(I-1) x (J-1)`` block to the nearest admissible counts and fills
    the last row and column from the integer margins, which is the same as solving the
    weighted zero-sum constraints.  Not always the nearest lattice point.  Leading axes
    of ``z`` are treated as a batch.
    """
    z = np.asarray(z, dtype=float)
    if not in_vg(grid, z, 1e-8):
        raise ValueError("z violates the weighted zero-sum constraints")
    e = expected_counts(grid)
    counts = np.zeros(z.shape, dtype=np.int64)
    lead = np.rint(e[:-1, :-1] + z[..., :-1, :-1] * np.sqrt(e[:-1, :-1])).astype(np.int64)
    counts[..., :-1, :-1] = lead
    counts[..., :-1, -1] = grid.adot[:-1] - lead.sum(axis=-1)
    counts[..., -1, :] = grid.bdot - counts[..., :-1, :].sum(axis=-2)
    return LatticePoint((counts - e) / np.sqrt(e), counts)


def diameter_bound(n: int, gamma: float) -> float:
    """``16 n^(5/2 - 3 gamma)``."""
    return 16 * n ** (2.5 - 3 * float(gamma))
