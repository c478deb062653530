import math
from fractions import Fraction
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from copulalimit.blocking import (
    Blocking,
    GridBlocking,
    GridSpec,
    InvalidBlockingError,
    blocking_prob_exact,
    box_counts,
    expected_count,
    factorial_free_approx,
    factorial_free_approx_direct,
    grid_blocking_prob_exact,
    log_factorial,
    log_prob,
    prob,
    rect_prob,
    sparsity,
    stirling_log_factorial,
    successive_ratio,
)
from copulalimit.copula import Permutation
from oracles import all_permutations, enumerated_blocking, enumerated_grid

SIGMA8 = (4, 1, 6, 3, 5, 2, 8, 7)


def feasible(n, a, b):
    return range(max(0, a + b - n), min(a, b) + 1)


class TestBlockingType:
    def test_derived_counts(self):
        b = Blocking(8, 4, 5, 3)
        assert b.adot == (4, 4) and b.bdot == (5, 3)
        assert b.cdot == ((3, 1), (2, 2))

    @pytest.mark.parametrize("args", [(8, 4, 5, 5), (8, 9, 1, 0), (0, 0, 0, 0), (8, 7, 7, 5)])
    def test_infeasible(self, args):
        with pytest.raises(InvalidBlockingError):
            Blocking(*args)

    def test_grid_counts_validated(self):
        g = GridSpec(4, (0, 2, 4), (0, 2, 4))
        with pytest.raises(InvalidBlockingError, match="row band 1"):
            GridBlocking(g, ((2, 1), (0, 1)))
        with pytest.raises(InvalidBlockingError, match="negative"):
            GridBlocking(g, ((3, -1), (-1, 3)))

    def test_grid_spec_validated(self):
        with pytest.raises(ValueError):
            GridSpec(4, (0, 2, 2, 4), (0, 4))
        with pytest.raises(ValueError):
            GridSpec(4, (1, 4), (0, 4))

    def test_cumulative_roundtrip(self):
        g = GridSpec(8, (0, 4, 8), (0, 5, 8))
        gb = GridBlocking(g, ((3, 1), (2, 2)))
        assert gb.cumulative()[1, 1] == 3
        assert GridBlocking.from_cumulative(g, gb.cumulative()) == gb

    def test_box_counts_worked_example(self):
        g = GridSpec(8, (0, 4, 8), (0, 5, 8))
        assert box_counts(Permutation(SIGMA8), g).tolist() == [[3, 1], [2, 2]]


class TestExactValues:
    def test_examples(self):
        assert blocking_prob_exact(Blocking(2, 1, 1, 1)) == Fraction(1, 2)
        assert blocking_prob_exact(Blocking(8, 4, 5, 3)) == Fraction(3, 7)
        for n in range(1, 8):
            for a in range(n + 1):
                assert blocking_prob_exact(Blocking(n, a, n, a)) == 1

    def test_expected_count(self):
        assert expected_count(8, 4, 5) == Fraction(5, 2)
        assert expected_count(9, 0, 4) == 0
        assert expected_count(9, 9, 4) == 4

    def test_grid_examples(self):
        gb = GridBlocking(GridSpec(2, (0, 1, 2), (0, 1, 2)), ((1, 0), (0, 1)))
        assert grid_blocking_prob_exact(gb) == Fraction(1, 2)
        gb = GridBlocking(GridSpec(8, (0, 4, 8), (0, 5, 8)), ((3, 1), (2, 2)))
        assert grid_blocking_prob_exact(gb) == Fraction(3, 7)

    def test_rect_examples(self):
        for c in feasible(8, 4, 5):
            assert rect_prob(8, 2, 6, 1, 6, c) == blocking_prob_exact(Blocking(8, 4, 5, c))
        assert rect_prob(5, 1, 2, 1, 2, 1) == Fraction(1, 5)
        assert rect_prob(8, 2, 4, 1, 6, 3) == 0

    def test_sum_of_8_4_5(self):
        ps = [blocking_prob_exact(Blocking(8, 4, 5, c)) for c in feasible(8, 4, 5)]
        assert ps == [Fraction(5, 70), Fraction(30, 70), Fraction(30, 70), Fraction(5, 70)]

    def test_exact_prob_over_s8(self):
        assert enumerated_blocking(8, 4, 5)[3] == Fraction(3, 7)

    def test_prob_dispatch(self):
        b = Blocking(8, 4, 5, 3)
        assert prob(b) == Fraction(3, 7)
        assert prob(b, exact=False) == pytest.approx(3 / 7, rel=1e-12)
        assert isinstance(prob(Blocking(3000, 1500, 1500, 750)), float)


@pytest.mark.parametrize("n", range(1, 8))
def test_enumeration_normalization_and_mean(n):
    for a in range(n + 1):
        for b in range(n + 1):
            ref = enumerated_blocking(n, a, b)
            ps = {c: blocking_prob_exact(Blocking(n, a, b, c)) for c in feasible(n, a, b)}
            assert ps == ref
            assert sum(ps.values()) == 1
            assert sum(c * p for c, p in ps.items()) == Fraction(a * b, n)


@pytest.mark.parametrize("n", range(2, 8))
def test_grid_enumeration(n):
    cuts = list(range(1, n))
    for I in (1, 2, 3):
        for J in (1, 2, 3):
            for ra in combinations(cuts, I - 1):
                for rb in combinations(cuts, J - 1):
                    rows, cols = (0, *ra, n), (0, *rb, n)
                    g = GridSpec(n, rows, cols)
                    for key, p in enumerated_grid(n, list(rows), list(cols)).items():
                        assert grid_blocking_prob_exact(GridBlocking(g, key)) == p


@pytest.mark.parametrize("n", range(3, 8))
def test_rect_translation_by_enumeration(n):
    perms = all_permutations(n)
    for a1 in range(1, n):
        for a2 in range(a1 + 1, n):
            for b1 in range(1, n):
                for b2 in range(b1 + 1, n):
                    inside = ((perms[:, a1:a2] >= b1) & (perms[:, a1:a2] < b2)).sum(axis=1)
                    hist = np.bincount(inside, minlength=n + 1)
                    for c in range(n + 1):
                        assert rect_prob(n, a1, a2, b1, b2, c) == Fraction(int(hist[c]), len(perms))


def test_successive_ratio():
    n, a, b = 20, 9, 12
    cs = list(feasible(n, a, b))
    ratios = [successive_ratio(n, a, b, c) for c in cs[:-1]]
    for c, r in zip(cs, ratios):
        assert r == blocking_prob_exact(Blocking(n, a, b, c + 1)) / blocking_prob_exact(Blocking(n, a, b, c))
    assert all(x > y for x, y in zip(ratios, ratios[1:]))


class TestStirling:
    def test_examples(self):
        lf, st1 = stirling_log_factorial(1)
        assert lf == 0.0
        assert st1 == pytest.approx(1 - 0.5 * math.log(2 * math.pi), abs=1e-15)
        assert st1 == pytest.approx(0.0810615, abs=1e-7)
        assert st1 < 1 / 12
        assert 0 < stirling_log_factorial(10).tail < 1 / 120
        assert stirling_log_factorial(2).log_factorial == pytest.approx(0.693147, abs=1e-6)
        assert stirling_log_factorial(0) == (0.0, None)

    def test_tail_bounds_up_to_1e5(self):
        k = np.arange(1, 100_001)
        for x in list(range(1, 2001)) + list(range(2001, 100_001, 97)) + [100_000]:
            st_k = stirling_log_factorial(x).tail
            assert 0 < st_k < 1 / (12 * x)
        # vectorized check over every k using the next term of the series as a lower bound
        tail = log_factorial(k) - (k * np.log(k) - k + 0.5 * np.log(k) + 0.5 * math.log(2 * math.pi))
        assert (tail > 0).all()
        assert (tail < 1 / (12 * k) + 1e-9).all()

    def test_log_factorial_table(self):
        assert log_factorial(0) == 0
        assert log_factorial(20) == pytest.approx(math.lgamma(21), rel=1e-15)
        assert np.allclose(log_factorial(np.array([3, 4])), np.log([6, 24]))
        with pytest.raises(ValueError):
            log_factorial(-1)


class TestLogProb:
    @given(st.integers(1, 60).flatmap(lambda n: st.tuples(st.just(n), st.integers(0, n), st.integers(0, n))), st.data())
    def test_matches_exact(self, nab, data):
        n, a, b = nab
        c = data.draw(st.sampled_from(list(feasible(n, a, b))))
        blk = Blocking(n, a, b, c)
        assert log_prob(blk) == pytest.approx(math.log(blocking_prob_exact(blk)), abs=1e-10)

    def test_grid_equals_pointwise(self):
        b = Blocking(500, 200, 310, 130)
        assert log_prob(b) == pytest.approx(log_prob(b.as_grid()), abs=1e-12)


class TestApproximation:
    def test_sparsity(self):
        assert sparsity(Blocking(8, 4, 5, 3)) == 1
        assert sparsity(Blocking(9, 4, 9, 4)) == 0
        assert sparsity(Blocking(400, 200, 200, 100)) == 100

    def test_loose_on_worked_example(self):
        ap = factorial_free_approx(Blocking(8, 4, 5, 3))
        assert ap.low_sparsity
        assert abs(ap.p / (3 / 7) - 1) < 4 / 12

    def test_symmetry(self):
        for n, a, b, c in [(8, 4, 5, 3), (100, 30, 61, 20), (999, 400, 333, 140)]:
            assert factorial_free_approx(Blocking(n, a, b, c)).log_p == pytest.approx(
                factorial_free_approx(Blocking(n, b, a, c)).log_p, abs=1e-12
            )

    def test_direct_form_agrees(self):
        for blk in (Blocking(100, 30, 61, 20), Blocking(2000, 1000, 700, 340)):
            assert factorial_free_approx(blk).log_p == pytest.approx(factorial_free_approx_direct(blk), abs=1e-8)

    def test_zero_sparsity_rejected(self):
        with pytest.raises(ValueError):
            factorial_free_approx(Blocking(9, 4, 9, 4))

    def test_ratio_improves(self):
        errs = []
        for k in (25, 50, 100, 200):
            blk = Blocking(4 * k, 2 * k, 2 * k, k)
            errs.append(abs(float(blocking_prob_exact(blk)) / factorial_free_approx(blk).p - 1))
        assert all(x > y for x, y in zip(errs, errs[1:]))
        assert errs[-1] < 0.01

    def test_n400(self):
        blk = Blocking(400, 200, 200, 100)
        assert factorial_free_approx(blk).p / float(blocking_prob_exact(blk)) == pytest.approx(1.0019, abs=1e-4)
