"""Joint sampling of a Gaussian point of the constraint subspace and a lattice fluctuation, and the matching copula."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.stats import norm

from .blocking import GridBlocking, GridSpec, log_factorial
from .copula import DiscreteCopula
from .gaussian import (
    as_rational,
    build_gamma_grid,
    compare_power,
    diameter_bound,
    expected_counts,
    nearest_lattice_point,
)
from .rng import as_generator
from .sheet import sheet_values_from_vg, vg_basis

#: Window enumeration refuses to list more lattice points than this.
MAX_CELLS = 200_000


def _in_window(counts: np.ndarray, grid: GridSpec, eta) -> np.ndarray:
    """Whether every ``|tilde l_ij| < n^eta``, for a batch of count matrices (exact near ties)."""
    n = grid.n
    e = expected_counts(grid)
    dev = counts - e
    ratio = dev * dev / e  # tilde l squared
    thr = float(n) ** (2 * float(as_rational(eta)))
    inside = ratio < thr
    close = np.abs(ratio - thr) <= 1e-9 * thr
    for idx in np.argwhere(close):
        *lead, i, j = idx
        d = n * int(counts[tuple(idx)]) - int(grid.adot[i]) * int(grid.bdot[j])
        q = Fraction(d * d, n * int(grid.adot[i]) * int(grid.bdot[j]))
        inside[tuple(idx)] = compare_power(q, n, 2 * as_rational(eta)) < 0
    return inside.all(axis=(-2, -1))


def _enumerate_window(grid: GridSpec, eta, max_cells: int) -> np.ndarray:
    e = expected_counts(grid)
    half = float(grid.n) ** float(as_rational(eta)) * np.sqrt(e)
    lo = np.floor(e - half).astype(np.int64)
    hi = np.ceil(e + half).astype(np.int64)
    I, J = e.shape
    ranges = [range(lo[i, j], hi[i, j] + 1) for i in range(I - 1) for j in range(J - 1)]
    total = math.prod(len(r) for r in ranges)
    if total > max_cells:
        raise ValueError(f"window box holds {total} lattice points, above max_cells={max_cells}")
    lead = np.array(list(itertools.product(*ranges)), dtype=np.int64).reshape(-1, I - 1, J - 1)
    counts = np.zeros((len(lead), I, J), dtype=np.int64)
    counts[:, :-1, :-1] = lead
    counts[:, :-1, -1] = grid.adot[:-1] - lead.sum(axis=-1)
    counts[:, -1, :] = grid.bdot - counts[:, :-1, :].sum(axis=-2)
    return counts[_in_window(counts, grid, eta)]


def _key(counts: np.ndarray) -> bytes:
    return np.ascontiguousarray(counts[:-1, :-1], dtype=np.int64).tobytes()


@dataclass(frozen=True, eq=False)
class VoronoiAssignment:
    """Lattice window with per-cell Gaussian measure and exact probability.

    Cells are the preimages of the constructive rounding map, which for 2x2 grids are the
    Voronoi cells of the one-dimensional lattice.
    """

    grid: GridSpec
    eta: object
    counts: np.ndarray
    P: np.ndarray
    mu: np.ndarray
    mu_se: np.ndarray
    index: dict = field(repr=False)

    @property
    def dim(self) -> int:
        return (self.grid.I - 1) * (self.grid.J - 1)

    @property
    def p_escape(self) -> float:
        return max(0.0, 1.0 - math.fsum(self.P))

    @property
    def mu_escape(self) -> float:
        return max(0.0, 1.0 - math.fsum(self.mu))

    def lookup(self, counts: np.ndarray) -> np.ndarray:
        """Window index for each count matrix in a batch, ``-1`` outside the window."""
        counts = np.asarray(counts)
        flat = counts.reshape(-1, *counts.shape[-2:])
        out = np.array([self.index.get(_key(c), -1) for c in flat], dtype=np.int64)
        return out.reshape(counts.shape[:-2])

    def match_probability(self) -> float:
        """``sum min(mu, P)`` over the window and the escape state."""
        return math.fsum(np.minimum(self.mu, self.P)) + min(self.mu_escape, self.p_escape)


def _one_dimensional_mu(grid: GridSpec, counts: np.ndarray) -> np.ndarray:
    bu, bv = vg_basis(grid)
    e = expected_counts(grid)
    # c = counts[0, 0] moves the other three entries by -1, -1, +1
    sign = np.array([[1.0, -1.0], [-1.0, 1.0]])
    direction = float((bu[:, 0][:, None] * sign / np.sqrt(e) * bv[:, 0][None, :]).sum())
    base = float((bu[:, 0][:, None] * (counts[0] - e) / np.sqrt(e) * bv[:, 0][None, :]).sum())
    c = counts[:, 0, 0] - counts[0, 0, 0]
    mid_lo = base + direction * (c - 0.5)
    mid_hi = base + direction * (c + 0.5)
    return norm.cdf(np.maximum(mid_lo, mid_hi)) - norm.cdf(np.minimum(mid_lo, mid_hi))


def sample_vg(grid: GridSpec, size: int, rng=None) -> np.ndarray:
    """``size`` draws of the unit normal measure on the constraint subspace, shape ``(size, I, J)``."""
    rng = as_generator(rng)
    bu, bv = vg_basis(grid)
    w = rng.standard_normal((size, bu.shape[1], bv.shape[1]))
    return bu @ w @ bv.T


def build_assignment(grid: GridSpec, eta, mc_samples: int = 100_000, rng=None, max_cells: int = MAX_CELLS) -> VoronoiAssignment:
    counts = _enumerate_window(grid, eta, max_cells)
    P = np.zeros(len(counts))
    ok = (counts >= 0).all(axis=(-2, -1))
    head = math.fsum(log_factorial(grid.adot)) + math.fsum(log_factorial(grid.bdot)) - float(log_factorial(grid.n))
    P[ok] = np.exp(head - log_factorial(counts[ok]).sum(axis=(-2, -1)))
    index = {_key(c): k for k, c in enumerate(counts)}
    if (grid.I, grid.J) == (2, 2):
        mu = _one_dimensional_mu(grid, counts)
        se = np.zeros_like(mu)
    else:
        rng = as_generator(rng)
        z = sample_vg(grid, mc_samples, rng)
        cells = nearest_lattice_point(z, grid).counts
        idx = np.array([index.get(_key(c), -1) for c in cells])
        hits = np.bincount(idx[idx >= 0], minlength=len(counts))
        mu = hits / mc_samples
        se = np.sqrt(mu * (1 - mu) / mc_samples)
    for arr in (counts, P, mu, se):
        arr.setflags(write=False)
    return VoronoiAssignment(grid, eta, counts, P, mu, se, index)


def cell_measure_mu(l, assignment: VoronoiAssignment, mc_samples: int | None = None, rng=None) -> tuple[float, float]:
    """Gaussian measure of the cell of lattice point ``l`` (counts or fluctuation matrix) and its standard error.

    Exact for 2x2 grids.  Otherwise the table value, or a fresh Monte Carlo estimate when
    ``mc_samples`` is given.
    """
    g = assignment.grid
    l = np.asarray(l)
    counts = l if l.dtype.kind in "iu" else nearest_lattice_point(l, g).counts
    k = assignment.index.get(_key(counts), -1)
    if k < 0:
        raise ValueError("lattice point is outside the window")
    if mc_samples is None or (g.I, g.J) == (2, 2):
        return float(assignment.mu[k]), float(assignment.mu_se[k])
    z = sample_vg(g, mc_samples, rng)
    hit = (nearest_lattice_point(z, g).counts == counts).all(axis=(-2, -1))
    p = hit.mean()
    return float(p), float(math.sqrt(p * (1 - p) / mc_samples))


def sample_box_counts(grid: GridSpec, rng=None) -> np.ndarray:
    """Box counts of a uniform permutation, drawn band by band.

    The columns hit by the rows of band ``i`` are a uniform draw without replacement
    from the columns left over by earlier bands, so each band's counts are
    multivariate hypergeometric.
    """
    rng = as_generator(rng)
    left = np.array(grid.bdot, dtype=np.int64)
    out = np.zeros((grid.I, grid.J), dtype=np.int64)
    for i, k in enumerate(grid.adot[:-1]):
        out[i] = rng.multivariate_hypergeometric(left, int(k))
        left -= out[i]
    out[-1] = left
    return out


def _outside_window_counts(assignment: VoronoiAssignment, rng) -> np.ndarray:
    """Exact draw of box counts conditioned on leaving the window (rejection from the unconditioned law)."""
    while True:
        c = sample_box_counts(assignment.grid, rng)
        if assignment.index.get(_key(c), -1) < 0:
            return c


@dataclass(frozen=True, eq=False)
class CoupleBatch:
    z: np.ndarray
    h: np.ndarray
    h_index: np.ndarray
    matched: np.ndarray


def couple_batch(assignment: VoronoiAssignment, size: int, rng=None) -> CoupleBatch:
    """Maximal coupling of the Gaussian cell law and the exact count law over window plus escape.

    Keeps ``h = cell(z)`` with probability ``min(1, P / mu)`` and otherwise draws ``h`` from
    the normalized excess ``(P - mu)+``.  An escape draw is completed by an exact draw
    conditioned on leaving the window.
    """
    rng = as_generator(rng)
    g = assignment.grid
    P = np.append(np.asarray(assignment.P), assignment.p_escape)
    mu = np.append(np.asarray(assignment.mu), assignment.mu_escape)
    esc = len(P) - 1
    z = sample_vg(g, size, rng)
    cells = nearest_lattice_point(z, g).counts
    x = assignment.lookup(cells)
    x = np.where(x < 0, esc, x)
    with np.errstate(divide="ignore", invalid="ignore"):
        keep_p = np.where(mu > 0, np.minimum(1.0, P / np.where(mu > 0, mu, 1.0)), 1.0)
    keep = rng.random(size) < keep_p[x]
    excess = np.clip(P - mu, 0.0, None)
    y = x.copy()
    redraw = np.flatnonzero(~keep)
    if len(redraw):
        y[redraw] = rng.choice(len(P), size=len(redraw), p=excess / excess.sum())
    h = np.empty_like(cells)
    inside = y != esc
    h[inside] = assignment.counts[y[inside]]
    for k in np.flatnonzero(~inside):
        h[k] = _outside_window_counts(assignment, rng)
    matched = (h == cells).all(axis=(-2, -1))
    return CoupleBatch(z, h, np.where(inside, y, -1), matched)


def couple(assignment: VoronoiAssignment, rng=None) -> tuple[np.ndarray, np.ndarray, bool]:
    b = couple_batch(assignment, 1, rng)
    return b.z[0], b.h[0], bool(b.matched[0])


def conditioned_copula_sample(grid: GridSpec, counts, rng=None) -> DiscreteCopula:
    """Uniform permutation among those with the given box counts."""
    rng = as_generator(rng)
    gb = counts if isinstance(counts, GridBlocking) else GridBlocking(grid, tuple(map(tuple, np.asarray(counts).tolist())))
    cd = gb.counts
    labels = np.concatenate([rng.permutation(np.repeat(np.arange(grid.J), cd[i])) for i in range(grid.I)])
    sigma0 = np.empty(grid.n, dtype=np.int64)
    for j in range(grid.J):
        rows = np.flatnonzero(labels == j)
        sigma0[rows] = grid.b[j] + rng.permutation(grid.bdot[j])
    return DiscreteCopula(sigma0)


@dataclass(frozen=True, eq=False)
class CoupledSample:
    n: int
    gamma: object
    z_tilde: np.ndarray
    h_tilde: np.ndarray
    matched: bool
    copula: DiscreteCopula
    sheet: np.ndarray
    scaled_residual: np.ndarray
    sup_distance: float
    pair_bound: float
    diameter_bound: float

    def to_record(self) -> dict:
        return {
            "matched": self.matched,
            "sup_distance": self.sup_distance,
            "h": self.h_tilde.tolist(),
            "z": self.z_tilde.tolist(),
        }


def _complete(assignment, n, gamma, z, h_counts, matched, rng) -> CoupledSample:
    g = assignment.grid
    e = expected_counts(g)
    h = (h_counts - e) / np.sqrt(e)
    cop = conditioned_copula_sample(g, h_counts, rng)
    f = sheet_values_from_vg(z, g)
    nodes = cop.on_grid(g.a, g.b)
    y = (nodes - np.outer(g.a, g.b) / n) / math.sqrt(n)
    return CoupledSample(
        n, gamma, z, h, matched, cop, f, y,
        float(np.abs(y - f).max()),
        float(2 * np.linalg.norm(h - z)),
        diameter_bound(n, gamma),
    )


def coupled_run(n: int, gamma, eta, rng=None, assignment: VoronoiAssignment | None = None) -> CoupledSample:
    """One draw of the full pipeline on the gamma-grid: coupled pair, matching copula and sheet node values."""
    rng = as_generator(rng)
    if assignment is None:
        assignment = build_assignment(build_gamma_grid(n, gamma).grid, eta, rng=rng)
    b = couple_batch(assignment, 1, rng)
    return _complete(assignment, n, gamma, b.z[0], b.h[0], bool(b.matched[0]), rng)


def coupled_runs(n: int, gamma, eta, size: int, rng=None, assignment: VoronoiAssignment | None = None) -> list[CoupledSample]:
    rng = as_generator(rng)
    if assignment is None:
        assignment = build_assignment(build_gamma_grid(n, gamma).grid, eta, rng=rng)
    b = couple_batch(assignment, size, rng)
    return [_complete(assignment, n, gamma, b.z[k], b.h[k], bool(b.matched[k]), rng) for k in range(size)]
