"""Statistical audits of random discrete copulas against their Gaussian and sheet limits."""
from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass
from functools import partial
from typing import Callable, Iterable

import numpy as np
from scipy import ndimage, stats

from ._kernels import residual_stats
from .copula import DiscreteCopula
from .gaussian import as_rational, compare_power, floor_power, pointwise_variance, tail_bound
from .rng import DEFAULT_CHUNK, fresh_seed, map_chunks
from .samplers import sample_permutation_batch
from .sheet import sample_sheet_values, sheet_covariance_oracle

#: Stream shared by every audit that needs plain uniform permutations, so that audits
#: run with the same seed see the same permutations.
PERMUTATION_STREAM = "permutations"


@dataclass
class TestReport:
    test: str
    params: dict
    statistic: float
    threshold: float
    passed: bool
    runtime_ms: float
    seed: int

    __test__ = False  # not a pytest class

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pass"] = d.pop("passed")
        return {k: d[k] for k in ("test", "params", "statistic", "threshold", "pass", "runtime_ms", "seed")}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


class _Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.ms = (time.perf_counter() - self.t0) * 1000.0


def _seed(seed):
    return fresh_seed() if seed is None else int(seed)


# -- Kolmogorov-Smirnov -------------------------------------------------------


def ks_statistic(samples, cdf: Callable, spacing: float | None = None) -> float:
    """Sup-distance between the empirical CDF of ``samples`` and ``cdf``.

    With ``spacing`` the samples are taken to live on a lattice of that step and the
    reference is read at the midpoints ``x + spacing/2`` (discreteness correction); all
    lattice points between observed values are covered.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("empty sample")
    if spacing is None:
        return float(stats.kstest(x, cdf).statistic)
    xs, counts = np.unique(x, return_counts=True)
    ecdf = np.cumsum(counts) / x.size
    h = spacing / 2
    at = np.abs(ecdf - cdf(xs + h))
    below = np.concatenate([[cdf(xs[0] - h)], np.abs(ecdf[:-1] - cdf(xs[1:] - h))])
    return float(max(at.max(), below.max()))


def _normal_cdf(var: float):
    sd = math.sqrt(var)
    return partial(stats.norm.cdf, scale=sd)


# -- residuals on node sets ---------------------------------------------------


def node_counts(sigmas: np.ndarray, rows, cols) -> np.ndarray:
    """``C[rows[k], cols[l]]`` for each 0-based permutation in the batch, shape ``(N, len(rows), len(cols))``."""
    sigmas = np.atleast_2d(np.asarray(sigmas, dtype=np.int64))
    N, n = sigmas.shape
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    rb = np.searchsorted(rows, np.arange(1, n + 1), side="left")
    cb = np.searchsorted(cols, sigmas + 1, side="left")
    R, K = len(rows) + 1, len(cols) + 1
    flat = (np.arange(N)[:, None] * R + rb[None, :]) * K + cb
    box = np.bincount(flat.ravel(), minlength=N * R * K).reshape(N, R, K)
    return box.cumsum(axis=1).cumsum(axis=2)[:, : R - 1, : K - 1]


def scaled_residuals(sigmas: np.ndarray, rows, cols) -> np.ndarray:
    """``sqrt(n) y_n`` at the node pairs: ``(C - ab/n) / sqrt(n)``."""
    sigmas = np.atleast_2d(sigmas)
    n = sigmas.shape[1]
    rows = np.asarray(rows)
    cols = np.asarray(cols)
    c = node_counts(sigmas, rows, cols)
    return (c - np.outer(rows, cols) / n) / math.sqrt(n)


def _residual_chunk(rng, size, n, rows, cols):
    return scaled_residuals(sample_permutation_batch(n, size, rng), rows, cols)


def sample_residuals(n: int, rows, cols, N: int, seed: int, chunk: int = DEFAULT_CHUNK, workers: int = 1) -> np.ndarray:
    parts = map_chunks(partial(_residual_chunk, n=n, rows=list(rows), cols=list(cols)), N, seed, PERMUTATION_STREAM, chunk, workers)
    return np.concatenate(parts)


# -- audits ----------------------------------------------------------------


def _node(n: int, u: float) -> int:
    a = int(round(u * n))
    if not 0 < a < n:
        raise ValueError(f"point {u} is not interior for n={n}")
    return a


def pointwise_normality_audit(n: int, u: float, v: float, N: int, seed=None, threshold: float = 0.02, workers: int = 1) -> TestReport:
    """KS of ``sqrt(n) y_n(u, v)`` over ``N`` uniform permutations against its Gaussian limit."""
    seed = _seed(seed)
    with _Timer() as t:
        a, b = _node(n, u), _node(n, v)
        y = sample_residuals(n, [a], [b], N, seed, workers=workers)[:, 0, 0]
        var = pointwise_variance(a / n, b / n)
        stat = ks_statistic(y, _normal_cdf(var), spacing=1 / math.sqrt(n))
    budget = {
        "monte_carlo": 1.63 / math.sqrt(N),
        "lattice": 0.5 / math.sqrt(2 * math.pi * var) / math.sqrt(n),
    }
    return TestReport(
        "pointwise", {"n": n, "u": u, "v": v, "N": N, "a": a, "b": b, "variance": var, "budget": budget},
        stat, threshold, stat < threshold, t.ms, seed,
    )


def joint_normality_audit(n: int, points, N: int, seed=None, threshold: float = 0.015, workers: int = 1) -> TestReport:
    """Max entrywise error of the empirical covariance of ``sqrt(n) y_n`` at ``points`` against the sheet covariance.

    ``points`` is a sequence of ``(u, v)`` pairs or an integer ``k`` for the uniform
    ``k x k`` interior grid.
    """
    seed = _seed(seed)
    if isinstance(points, int):
        ticks = [i / (points + 1) for i in range(1, points + 1)]
        points = [(x, y) for x in ticks for y in ticks]
    points = [(float(p), float(q)) for p, q in points]
    with _Timer() as t:
        a = [_node(n, p) for p, _ in points]
        b = [_node(n, q) for _, q in points]
        rows = sorted(set(a))
        cols = sorted(set(b))
        y = sample_residuals(n, rows, cols, N, seed, workers=workers)
        vals = np.stack([y[:, rows.index(ai), cols.index(bi)] for ai, bi in zip(a, b)], axis=1)
        emp = np.atleast_2d(np.cov(vals, rowvar=False))
        u = np.array(a) / n
        v = np.array(b) / n
        oracle = sheet_covariance_oracle(u[:, None], v[:, None], u[None, :], v[None, :])
        err = np.abs(emp - oracle)
        stat = float(err.max())
    return TestReport(
        "joint", {"n": n, "N": N, "points": points, "max_diagonal_error": float(np.diag(err).max())},
        stat, threshold, stat < threshold, t.ms, seed,
    )


def _x_chunk(rng, size, n, a, b):
    return (sample_permutation_batch(n, size, rng)[:, :a] < b).sum(axis=1)


def tail_audit(n: int, a: int, b: int, N: int, seed=None, H=(1.5, 2.0, 2.5), workers: int = 1) -> TestReport:
    """Empirical ``Pr[|Y| > H sqrt(Cn)]`` against ``exp(-H^2/2)/H`` plus three standard errors.

    The statistic is the largest excess over the allowance; the audit passes when it is <= 0.
    """
    seed = _seed(seed)
    with _Timer() as t:
        x = np.concatenate(map_chunks(partial(_x_chunk, n=n, a=a, b=b), N, seed, PERMUTATION_STREAM, workers=workers))
        y = np.abs(x - a * b / n)
        scale = math.sqrt(a * (n - a) * b * (n - b) / n ** 3)
        rows = []
        for h in H:
            bound = tail_bound(h)
            freq = float((y > h * scale).mean())
            allowance = bound + 3 * math.sqrt(bound / N)
            rows.append({"H": h, "frequency": freq, "bound": bound, "allowance": allowance})
        stat = max(r["frequency"] - r["allowance"] for r in rows)
    return TestReport("tail", {"n": n, "a": a, "b": b, "N": N, "levels": rows}, stat, 0.0, stat <= 0, t.ms, seed)


# -- Hölder -------------------------------------------------------------------


def _oscillation(values: np.ndarray, span: int) -> int:
    """Largest ``max - min`` over square index windows of side ``span + 1``."""
    size = span + 1
    hi = ndimage.maximum_filter(values, size=size, mode="nearest")
    lo = ndimage.minimum_filter(values, size=size, mode="nearest")
    return int((hi - lo).max())


def _subgrid(n: int, t: int) -> np.ndarray:
    nodes = np.arange(0, n + 1, t, dtype=np.int64)
    return nodes if nodes[-1] == n else np.append(nodes, n)


@dataclass(frozen=True)
class HolderDecision:
    ok: bool
    decided: bool
    lower: float
    upper: float
    stride: int


def holder_decide(c: DiscreteCopula, alpha, eps, pair_budget: int = 1 << 25) -> HolderDecision:
    """Decide whether ``|D(a2,b2) - D(a1,b1)| < n^(alpha/2 + eps)`` for all pairs with index gaps ``< n^alpha``.

    Works on subgrids of stride ``t``: since ``D`` moves by at most 1 per index step, the
    subgrid oscillation over the inner window is a lower bound and the oscillation over
    a widened window plus ``2t`` is an upper bound.  The stride halves until the bounds
    settle the comparison or the subgrid would exceed ``pair_budget`` nodes; stride 1 is exact.
    Values are scaled by ``n`` so every comparison is on integers.
    """
    n = c.n
    expo = as_rational(alpha) / 2 + as_rational(eps)
    k = floor_power(n, alpha)  # largest admissible index gap
    if compare_power(k, n, alpha) == 0:
        k -= 1

    def below_thr(scaled: int) -> bool:
        return compare_power(scaled, n, 1 + expo) < 0

    t = max(1, n // 512, math.ceil((n + 1) / math.sqrt(pair_budget)))
    while True:
        nodes = _subgrid(n, t)
        vals = n * c.on_grid(nodes, nodes) - np.outer(nodes, nodes)
        if n * n < 2**31:
            vals = vals.astype(np.int32)
        lower = _oscillation(vals, k // t)
        if t == 1:
            return HolderDecision(below_thr(lower), True, lower / n, lower / n, 1)
        upper = _oscillation(vals, (k + t) // t + 1) + 2 * t * n
        if not below_thr(lower):
            return HolderDecision(False, True, lower / n, upper / n, t)
        if below_thr(upper):
            return HolderDecision(True, True, lower / n, upper / n, t)
        t2 = t // 2
        if len(_subgrid(n, t2)) ** 2 > pair_budget:
            return HolderDecision(False, False, lower / n, upper / n, t)
        t = t2


def _holder_chunk(rng, size, n, alpha, eps, pair_budget):
    out = []
    for sigma in sample_permutation_batch(n, size, rng):
        d = holder_decide(DiscreteCopula(sigma), alpha, eps, pair_budget)
        out.append((d.ok, d.decided))
    return out


def holder_audit(
    n: int,
    alpha,
    eps,
    N: int,
    seed=None,
    pair_budget: int = 1 << 25,
    threshold: float = 0.99,
    copulas: Iterable[DiscreteCopula] | None = None,
    workers: int = 1,
) -> TestReport:
    """Fraction of copulas that are ``(alpha, eps)``-Hölder; undecided copulas count as failures."""
    seed = _seed(seed)
    params = {"n": n, "alpha": float(alpha), "eps": float(eps), "N": N, "pair_budget": pair_budget,
              "alpha_in_range": 7 / 8 < float(alpha) < 1}
    with _Timer() as t:
        if n ** float(alpha) < 2:
            params["vacuous"] = True
            stat = 1.0
        else:
            if copulas is None:
                res = [r for part in map_chunks(partial(_holder_chunk, n=n, alpha=alpha, eps=eps, pair_budget=pair_budget),
                                                N, seed, PERMUTATION_STREAM, chunk=10, workers=workers) for r in part]
            else:
                res = [(d.ok, d.decided) for d in (holder_decide(c, alpha, eps, pair_budget) for c in copulas)]
                params["N"] = len(res)
            params["undecided"] = sum(not dec for _, dec in res)
            stat = sum(ok for ok, _ in res) / len(res)
    return TestReport("holder", params, stat, threshold, stat >= threshold, t.ms, seed)


# -- concentration and distances ------------------------------------------------


def max_abs_residual(c) -> float:
    """``max |C_ab - ab/n|`` over the whole copula."""
    sigma0 = c.sigma0 if isinstance(c, DiscreteCopula) else np.asarray(c)
    return residual_stats(sigma0)[0]


def _max_chunk(rng, size, n):
    return np.array([residual_stats(s)[0] for s in sample_permutation_batch(n, size, rng)])


def concentration_audit(n: int, N: int, seed=None, threshold: float = 1.0,
                        copulas: Iterable[DiscreteCopula] | None = None, workers: int = 1) -> TestReport:
    """Fraction of copulas with ``max |Y| < sqrt(n log n)``."""
    if n < 4:
        raise ValueError("n must be at least 4")
    seed = _seed(seed)
    with _Timer() as t:
        if copulas is None:
            m = np.concatenate(map_chunks(partial(_max_chunk, n=n), N, seed, PERMUTATION_STREAM, chunk=100, workers=workers))
        else:
            m = np.array([max_abs_residual(c) for c in copulas])
        bound = math.sqrt(n * math.log(n))
        stat = float((m < bound).mean())
    return TestReport("concentration", {"n": n, "N": len(m), "bound": bound, "max_observed": float(m.max())},
                      stat, threshold, stat >= threshold, t.ms, seed)


def dp_distance(c, p) -> float:
    """Normalized ``L^p`` distance of ``c`` from the product copula (``p = inf`` gives the max)."""
    sigma0 = c.sigma0 if isinstance(c, DiscreteCopula) else np.asarray(c)
    n = len(sigma0)
    p = float(p)
    if p < 1:
        raise ValueError("p must be >= 1")
    if math.isinf(p):
        return residual_stats(sigma0)[0] / math.sqrt(n)
    s = residual_stats(sigma0, (p,))[1][0]
    return (s / n ** 2) ** (1 / p) / math.sqrt(n)


def dp_distances(c, ps) -> np.ndarray:
    """``d^p`` for several exponents from one scan."""
    sigma0 = c.sigma0 if isinstance(c, DiscreteCopula) else np.asarray(c)
    n = len(sigma0)
    ps = [float(p) for p in ps]
    finite = [p for p in ps if not math.isinf(p)]
    best, sums = residual_stats(sigma0, finite)
    it = iter(sums)
    out = [best if math.isinf(p) else (next(it) / n ** 2) ** (1 / p) for p in ps]
    return np.array(out) / math.sqrt(n)


def _dp_chunk(rng, size, n, ps):
    return np.stack([dp_distances(s, ps) for s in sample_permutation_batch(n, size, rng)])


def sample_dp(n: int, ps, N: int, seed: int, workers: int = 1) -> np.ndarray:
    """``d^p`` of ``N`` uniform copulas for each ``p``, shape ``(N, len(ps))``."""
    return np.concatenate(map_chunks(partial(_dp_chunk, n=n, ps=list(ps)), N, seed, PERMUTATION_STREAM, chunk=100, workers=workers))


def field_norms(values: np.ndarray, u, v, p) -> np.ndarray:
    """Trapezoid ``L^p`` norm (``p < inf``) or node max of node tables with shape ``(..., I+1, J+1)``."""
    values = np.asarray(values, dtype=float)
    p = float(p)
    if math.isinf(p):
        return np.abs(values).max(axis=(-2, -1))
    wu = np.zeros(len(u))
    wv = np.zeros(len(v))
    du, dv = np.diff(u), np.diff(v)
    wu[:-1] += du / 2
    wu[1:] += du / 2
    wv[:-1] += dv / 2
    wv[1:] += dv / 2
    return (np.einsum("...ij,i,j->...", np.abs(values) ** p, wu, wv)) ** (1 / p)


def _norm_chunk(rng, size, resolution, p):
    u = np.linspace(0.0, 1.0, resolution + 1)
    f = sample_sheet_values(resolution, size, rng)
    return field_norms(f, u, u, p)


def sheet_norm_samples(p, resolution: int, N: int, seed: int, workers: int = 1) -> np.ndarray:
    return np.concatenate(map_chunks(partial(_norm_chunk, resolution=resolution, p=p), N, seed, "sheet-norms",
                                     chunk=500, workers=workers))


def rho_estimate(p, r, grid_resolution: int = 64, N: int = 10_000, seed=None, norms: np.ndarray | None = None):
    """Monte Carlo ``Pr[||f||_p < r]`` for one or several ``r`` (reusing ``norms`` when given)."""
    if norms is None:
        norms = sheet_norm_samples(p, grid_resolution, N, _seed(seed))
    r_arr = np.asarray(r, dtype=float)
    if (r_arr < 0).any():
        raise ValueError("r must be >= 0")
    srt = np.sort(norms)
    out = np.searchsorted(srt, r_arr, side="left") / len(srt)
    return float(out) if out.ndim == 0 else out


def rho_convergence_audit(p, n: int, N: int, seed=None, grid_resolution: int = 64, threshold: float = 0.05,
                          workers: int = 1) -> TestReport:
    """Two-sample KS between ``d^p`` of ``N`` uniform copulas and ``N`` sheet norms."""
    seed = _seed(seed)
    with _Timer() as t:
        d = sample_dp(n, [p], N, seed, workers)[:, 0]
        f = sheet_norm_samples(p, grid_resolution, N, seed, workers)
        stat = float(stats.ks_2samp(d, f).statistic)
    params = {"p": str(p), "n": n, "N": N, "grid_resolution": grid_resolution,
              "mean_copula": float(d.mean()), "mean_sheet": float(f.mean())}
    return TestReport("rho", params, stat, threshold, stat < threshold, t.ms, seed)


def nobrown_audit(n: int, N: int, seed=None, g: Callable[[int], float] = math.log, threshold: float = 0.01,
                  workers: int = 1) -> TestReport:
    """Fraction of copulas with ``||y_n||_C0 > g(n)/sqrt(n)``, which should be small."""
    seed = _seed(seed)
    with _Timer() as t:
        d = sample_dp(n, [math.inf], N, seed, workers)[:, 0]
        stat = float((d > g(n)).mean())
    return TestReport("nobrown", {"n": n, "N": N, "g_of_n": g(n)}, stat, threshold, stat < threshold, t.ms, seed)


SUITES = ("pointwise", "joint", "holder", "concentration", "tail", "rho")


def run_suite(suite: str, n: int, samples: int, seed: int, thresholds: dict | None = None, workers: int = 1) -> list[TestReport]:
    """Run one named suite (or ``"all"``) with default parameters scaled to ``n``."""
    th = thresholds or {}
    names = SUITES if suite == "all" else (suite,)
    out = []
    for name in names:
        kw = {"threshold": th[name]} if name in th else {}
        if name == "pointwise":
            out.append(pointwise_normality_audit(n, 0.5, 0.5, samples, seed, workers=workers, **kw))
        elif name == "joint":
            out.append(joint_normality_audit(n, 3, samples, seed, workers=workers, **kw))
        elif name == "holder":
            out.append(holder_audit(n, 0.95, 0.05, min(samples, 100), seed, workers=workers, **kw))
        elif name == "concentration":
            out.append(concentration_audit(n, min(samples, 100), seed, workers=workers, **kw))
        elif name == "tail":
            if kw:
                raise ValueError("the tail audit has a fixed threshold of 0")
            out.append(tail_audit(n, n // 2, n // 2, samples, seed, workers=workers))
        elif name == "rho":
            out.append(rho_convergence_audit(math.inf, n, samples, seed, workers=workers, **kw))
        else:
            raise ValueError(f"unknown suite {name!r}")
    return out
