"""Acceptance criteria 1 to 13 at their stated parameters and tolerances.

Each test records one PASS/FAIL line, printed in the "acceptance criteria"
section of the pytest terminal summary.
"""
import math
import time
from fractions import Fraction
from itertools import combinations, permutations

import numpy as np
from scipy import stats

from copulalimit import audits
from copulalimit.blocking import (
    Blocking,
    GridBlocking,
    GridSpec,
    blocking_prob_exact,
    expected_count,
    grid_blocking_prob_exact,
)
from copulalimit.cli import main
from copulalimit.copula import DiscreteCopula
from copulalimit.coupling import build_assignment, couple_batch, coupled_runs
from copulalimit.gaussian import build_gamma_grid, central_ratio
from copulalimit.samplers import McmcConfig, birkhoff_chain, run_moves
from copulalimit.sheet import sample_sheet_values, sheet_covariance_oracle
from copulalimit.tiling import copula_from_pile, pile_from_copula, tiling_svg, validate_pile
from oracles import adversarial_piles, enumerated_blocking, enumerated_grid, sheet_covariance_expansion

SEED = 20240601
ETA = Fraction(1, 20)


def m2_gamma(n):
    return Fraction(1 - math.log(2.5) / math.log(n)).limit_denominator(10**6)


def cuts(n, k):
    """Every cut list ``0 = a0 < ... < ak = n`` with ``k`` parts."""
    return [(0, *mid, n) for mid in combinations(range(1, n), k - 1)]


def chi2_p(observed, expected, min_expected=5.0):
    observed = np.asarray(observed, dtype=float)
    expected = np.asarray(expected, dtype=float)
    small = expected < min_expected
    obs = np.append(observed[~small], observed[small].sum())
    exp = np.append(expected[~small], expected[small].sum())
    keep = exp > 0
    obs, exp = obs[keep], exp[keep]
    exp = exp * obs.sum() / exp.sum()
    return stats.chisquare(obs, exp).pvalue


def test_c01_exact_combinatorics(record_criterion):
    t0 = time.perf_counter()
    bad = 0
    checked = 0
    for n in range(1, 8):
        for a in range(n + 1):
            for b in range(n + 1):
                ref = enumerated_blocking(n, a, b)
                for c in range(max(0, a + b - n), min(a, b) + 1):
                    bad += blocking_prob_exact(Blocking(n, a, b, c)) != ref.get(c, 0)
                    checked += 1
    grids = 0
    for n in range(1, 8):
        for I in range(1, min(3, n) + 1):
            for J in range(1, min(3, n) + 1):
                for rows in cuts(n, I):
                    for cols in cuts(n, J):
                        ref = enumerated_grid(n, rows, cols)
                        spec = GridSpec(n, rows, cols)
                        for key, p in ref.items():
                            bad += grid_blocking_prob_exact(GridBlocking(spec, key)) != p
                            checked += 1
                        grids += 1
    elapsed = time.perf_counter() - t0
    ok = bad == 0 and elapsed < 120
    record_criterion(1, ok, f"{checked} probabilities over {grids} grids, {bad} mismatches, {elapsed:.1f}s (< 120s)")
    assert ok


def test_c02_normalization_and_mean(record_criterion):
    bad = 0
    for n in range(1, 8):
        for a in range(n + 1):
            for b in range(n + 1):
                cs = range(max(0, a + b - n), min(a, b) + 1)
                ps = [blocking_prob_exact(Blocking(n, a, b, c)) for c in cs]
                bad += sum(ps) != 1
                bad += sum(c * p for c, p in zip(cs, ps)) != expected_count(n, a, b)
    ok = bad == 0
    record_criterion(2, ok, f"sum P = 1 and sum cP = ab/n exactly for n <= 7, {bad} failures")
    assert ok


def test_c03_central_ratio(record_criterion):
    r = {n: central_ratio(n, n // 2, n // 2) for n in (10**2, 10**3, 10**4)}
    dev = {n: abs(x - 1) for n, x in r.items()}
    # the ratio tends to 1 from below, so "decreasing" is read as |ratio - 1| decreasing
    ok = dev[10**3] < 0.02 and dev[10**4] < 0.01 and dev[10**2] > dev[10**3] > dev[10**4]
    record_criterion(3, ok, "ratios " + ", ".join(f"n={n}: {x:.6f}" for n, x in r.items())
                     + " (|r-1| < 0.02 at 1e3, < 0.01 at 1e4, |r-1| decreasing)")
    assert ok


def test_c04_pointwise_clt(record_criterion):
    rep = audits.pointwise_normality_audit(4096, 0.5, 0.5, 20_000, SEED, threshold=0.02)
    record_criterion(4, rep.passed and rep.runtime_ms < 300_000,
                     f"lattice-corrected KS {rep.statistic:.4f} (< 0.02), {rep.runtime_ms / 1000:.1f}s")
    assert rep.passed and rep.runtime_ms < 300_000


def test_c05_joint_clt(record_criterion):
    # the closed-form covariance agrees with the 16-term bridge expansion on rational points
    pts = [Fraction(k, 8) for k in range(9)]
    worst = max(
        abs(Fraction(sheet_covariance_oracle(u1, v1, u2, v2)) - sheet_covariance_expansion(u1, v1, u2, v2))
        for u1 in pts[::2] for v1 in pts[1::2] for u2 in pts[1::3] for v2 in pts
    )
    rep = audits.joint_normality_audit(4096, 3, 20_000, SEED, threshold=0.015)
    ok = worst == 0 and rep.passed
    record_criterion(5, ok, f"max covariance error {rep.statistic:.4f} (< 0.015), oracle vs expansion diff {worst}")
    assert ok


def test_c06_tail_bound(record_criterion):
    rep = audits.tail_audit(4096, 2048, 2048, 100_000, SEED)
    lv = rep.params["levels"]
    record_criterion(6, rep.passed, "; ".join(f"H={r['H']}: {r['frequency']:.5f} <= {r['allowance']:.5f}" for r in lv))
    assert rep.passed


def test_c07_holder(record_criterion):
    r4 = audits.holder_audit(4096, Fraction(19, 20), Fraction(1, 20), 100, SEED)
    r16 = audits.holder_audit(16384, Fraction(19, 20), Fraction(1, 20), 100, SEED)
    ident = audits.holder_decide(DiscreteCopula(np.arange(64)), Fraction(3, 4), Fraction(1, 20))
    ok = r4.statistic >= 0.99 and r16.statistic >= r4.statistic and not ident.ok
    record_criterion(7, ok, f"pass fraction {r4.statistic:.2f} at n=4096 (>= 0.99), {r16.statistic:.2f} at n=16384 "
                     f"(>= n=4096 value), identity n=64 rejected: {not ident.ok}")
    assert ok


def test_c08_concentration(record_criterion):
    rep = audits.concentration_audit(4096, 100, SEED)
    ident = audits.concentration_audit(256, 1, copulas=[DiscreteCopula(np.arange(256))])
    ok = rep.statistic == 1.0 and ident.statistic == 0.0
    record_criterion(8, ok, f"fraction below sqrt(n log n): {rep.statistic:.2f} (= 1), "
                     f"identity n=256 max |Y| {ident.params['max_observed']:.1f} vs bound {ident.params['bound']:.1f}")
    assert ok


def test_c09_sheet_routes(record_criterion):
    a = sample_sheet_values(4, 20_000, np.random.default_rng(SEED), route="projection")
    b = sample_sheet_values(4, 20_000, np.random.default_rng(SEED + 1), route="bridge")
    ks = stats.ks_2samp(a[:, 2, 2], b[:, 2, 2]).statistic
    zero = all(not f[:, [0, -1], :].any() and not f[:, :, [0, -1]].any() for f in (a, b))
    ok = ks < 0.02 and zero
    record_criterion(9, ok, f"two-sample KS of f(1/2,1/2) {ks:.4f} (< 0.02), boundary exactly zero: {zero}")
    assert ok


def test_c10_coupling(record_criterion):
    n = 10**4
    gg = build_gamma_grid(n, m2_gamma(n))
    a = build_assignment(gg.grid, ETA, rng=SEED)
    batch = couple_batch(a, 100_000, SEED)
    inside = batch.h_index >= 0
    obs = np.append(np.bincount(batch.h_index[inside], minlength=len(a.P)), (~inside).sum())
    p = chi2_p(obs, np.append(a.P, a.p_escape) * 100_000)
    match = batch.matched.mean()
    med = [float(np.median([r.sup_distance for r in coupled_runs(k, m2_gamma(k), ETA, 200, SEED)]))
           for k in (10**3, 10**4, 10**5)]
    ok = gg.m == 2 and p > 0.001 and match >= 0.95 and med[0] > med[1] > med[2]
    record_criterion(10, ok, f"chi2 p {p:.3f} (> 0.001), match rate {match:.4f} (>= 0.95), median sup-distance "
                     + " > ".join(f"{x:.5f}" for x in med))
    assert ok


def test_c11_rho(record_criterion):
    rep = audits.rho_convergence_audit(math.inf, 1024, 10_000, SEED, grid_resolution=64)
    d = audits.sample_dp(1024, [1, 2, math.inf], 10_000, SEED)
    mono = bool(((d[:, 0] <= d[:, 1] + 1e-12) & (d[:, 1] <= d[:, 2] + 1e-12)).all())
    ok = rep.passed and mono
    record_criterion(11, ok, f"KS d_inf vs sheet sup {rep.statistic:.4f} (< 0.05), d1 <= d2 <= d_inf on all: {mono}")
    assert ok


def test_c12_birkhoff_chain(record_criterion):
    M = np.eye(16)
    run_moves(M, 10**6, SEED)
    drift = max(np.abs(M.sum(axis=0) - 1).max(), np.abs(M.sum(axis=1) - 1).max())
    x = np.array([m[0, 0] for m in birkhoff_chain(McmcConfig(2, burn_in=1000, seed=SEED), 10_000)])
    ks = stats.kstest(x, "uniform").statistic
    desc = []
    for n in (16, 32, 64):
        h = n // 2
        s = np.array([m[:h, :h].sum() - n / 4 for m in birkhoff_chain(McmcConfig(n, seed=SEED), 500)])
        desc.append(f"n={n}: {stats.kstest(s, 'norm', args=(0, 0.25)).statistic:.3f}")
    ok = drift < 1e-9 and M.min() >= 0 and ks < 0.02
    record_criterion(12, ok, f"drift {drift:.1e} (< 1e-9), n=2 KS {ks:.4f} (< 0.02); "
                     f"descriptive KS of n y_n(1/2,1/2) vs N(0,1/16): " + ", ".join(desc))
    assert ok


def test_c13_tiling(record_criterion, tmp_path):
    roundtrip = all(
        validate_pile(p).ok and copula_from_pile(p) == c
        for n in range(1, 7) for s in permutations(range(n))
        for c in [DiscreteCopula(np.array(s))] for p in [pile_from_copula(c)]
    )
    rng = np.random.default_rng(SEED)
    random_ok = all(validate_pile(pile_from_copula(DiscreteCopula(rng.permutation(64)))).ok for _ in range(1000))
    rejected = all(not validate_pile(p).ok for p in adversarial_piles().values())
    c = DiscreteCopula(np.random.default_rng(SEED).permutation(16))
    same_lib = tiling_svg(pile_from_copula(c)) == tiling_svg(pile_from_copula(DiscreteCopula(c.sigma0.copy())))
    outs = [tmp_path / "a.svg", tmp_path / "b.svg"]
    for o in outs:
        main(["tile", "--n", "16", "--seed", str(SEED), "--out", str(o)])
    same_cli = outs[0].read_bytes() == outs[1].read_bytes()
    ok = roundtrip and random_ok and rejected and same_lib and same_cli
    record_criterion(13, ok, f"roundtrip n<=6: {roundtrip}, random n=64 accepted: {random_ok}, "
                     f"adversarial rejected: {rejected}, SVG byte-identical: {same_lib and same_cli}")
    assert ok
