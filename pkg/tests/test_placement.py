import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from edgecache.core import NetworkParams, NumericalError, PopularityProfile
from edgecache.placement import (AspConstants, asp, asp_difference_bound,
                                 compute_constants, g0, g_noisy,
                                 optimal_asp_value, optimal_placement,
                                 oracle_placement)

PARAMS = NetworkParams()
K = compute_constants(PARAMS)


def random_profile(rng, n):
    return PopularityProfile(rng.dirichlet(np.ones(n)))


class TestConstants:
    def test_reference_values(self):
        # frozen from an mpmath evaluation of the defining integrals
        assert_allclose(K.A, 0.024195540762353102, rtol=1e-10)
        assert_allclose(K.B, 2.947053634724924, rtol=1e-10)
        assert_allclose(K.C, np.pi * PARAMS.lambda_bs, rtol=1e-14)

    def test_quadrature_against_incomplete_beta(self):
        # v = 1/(1+u) turns int_x^inf u^(c-1)/(1+u) du into the incomplete
        # Beta integral B(1/(1+x); 1-c, c), which mpmath evaluates
        # analytically, independent of any adaptive quadrature
        mp = pytest.importorskip("mpmath")
        mp.mp.dps = 40
        rng = np.random.default_rng(5)
        for _ in range(4):
            lam = float(rng.uniform(50, 400))
            alpha = float(rng.uniform(2.3, 5.5))
            params = NetworkParams(lambda_bs=lam, alpha=alpha)
            k = compute_constants(params)
            s0 = mp.mpf(params.sinr_threshold)
            c = mp.mpf(2) / mp.mpf(alpha)
            coef = 2 * mp.pi * lam * s0 ** c / mp.mpf(alpha)
            A_ref = coef * mp.betainc(1 - c, c, 0, s0 / (1 + s0))
            B_ref = coef * mp.betainc(1 - c, c, 0, 1)
            assert_allclose(k.A, float(A_ref), rtol=1e-9)
            assert_allclose(k.B, float(B_ref), rtol=1e-9)

    def test_b_closed_form(self):
        # the full-range integral has the Beta-function value pi / sin(2 pi / alpha)
        rng = np.random.default_rng(11)
        for _ in range(20):
            alpha = float(rng.uniform(2.2, 6.0))
            lam = float(rng.uniform(20, 500))
            params = NetworkParams(lambda_bs=lam, alpha=alpha)
            k = compute_constants(params)
            s0 = params.sinr_threshold
            expect = 2 * np.pi * lam * s0 ** (2 / alpha) * (np.pi / alpha) \
                / np.sin(2 * np.pi / alpha)
            assert_allclose(k.B, expect, rtol=1e-8)

    def test_ordering_invariants_near_boundary(self):
        for alpha in (2.05, 2.5, 4.0, 6.0):
            k = compute_constants(NetworkParams(alpha=alpha))
            assert 0.0 < k.A < k.B
            assert k.A + k.C > k.B

    def test_degenerate_constants_rejected(self):
        with pytest.raises(NumericalError, match="degenerate"):
            AspConstants(A=2.0, B=1.0, C=5.0, params=PARAMS)
        with pytest.raises(NumericalError, match="degenerate"):
            AspConstants(A=0.5, B=6.0, C=5.0, params=PARAMS)


class TestSuccessProbability:
    def test_g0_monotone_in_q(self):
        qs = np.linspace(0.0, 1.0, 50)
        vals = g0(qs, K)
        assert np.all(np.diff(vals) > 0)
        assert vals[0] == 0.0

    def test_g0_at_one(self):
        expect = K.C / (K.A + K.C)
        assert_allclose(g0(1.0, K), expect, rtol=1e-14)

    def test_noiseless_limit_matches_g0(self):
        for q in (0.2, 0.7, 1.0):
            assert_allclose(g_noisy(q, K), g0(q, K), rtol=1e-9)

    def test_noise_reduces_success(self):
        params = NetworkParams(noise=1e-7)
        k = compute_constants(params)
        assert g_noisy(0.5, k) < g0(0.5, k)

    def test_asp_weights_by_popularity(self):
        p = PopularityProfile(np.array([0.7, 0.3]))
        q = np.array([1.0, 0.0])
        assert_allclose(asp(p, q, K), 0.7 * g0(1.0, K), rtol=1e-14)


class TestOptimalPlacement:
    def test_uniform_profile_splits_budget(self):
        for n in range(2, 11):
            for L in range(1, n):
                pol = optimal_placement(PopularityProfile.uniform(n), K, L)
                assert_allclose(pol.q, np.full(n, L / n), atol=1e-9)

    def test_budget_exhausted(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            n = int(rng.integers(2, 9))
            L = int(rng.integers(1, n))
            pol = optimal_placement(random_profile(rng, n), K, L)
            assert_allclose(pol.q.sum(), L, atol=1e-7)

    def test_respects_popularity_order(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            n = int(rng.integers(2, 9))
            p = random_profile(rng, n)
            pol = optimal_placement(p, K, int(rng.integers(1, n)))
            order = np.argsort(-p.values)
            assert np.all(np.diff(pol.q[order]) <= 1e-12)

    def test_cache_bigger_than_catalogue(self):
        pol = optimal_placement(PopularityProfile.uniform(3), K, 5)
        assert_allclose(pol.q, np.ones(3))

    def test_zero_popularity_goes_to_zero(self):
        # degenerate profiles used to hit a 0/0 in the fractional formula
        p = PopularityProfile(np.array([1.0, 0.0, 0.0]))
        pol = optimal_placement(p, K, 2)
        assert_allclose(pol.q, [1.0, 0.0, 0.0], atol=1e-12)
        p = PopularityProfile(np.array([0.5, 0.5, 0.0]))
        pol = optimal_placement(p, K, 1)
        assert_allclose(pol.q, [0.5, 0.5, 0.0], atol=1e-9)

    def test_value_formula_agrees_with_direct_asp(self):
        rng = np.random.default_rng(6)
        for _ in range(40):
            n = int(rng.integers(2, 9))
            p = random_profile(rng, n)
            L = int(rng.integers(1, n))
            pol = optimal_placement(p, K, L)
            assert_allclose(optimal_asp_value(p, pol, K), asp(p, pol, K), rtol=1e-10)

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.floats(1e-6, 1.0), min_size=2, max_size=8),
           st.integers(1, 7))
    def test_q_always_feasible(self, weights, L):
        v = np.array(weights)
        p = PopularityProfile.normalized(v)
        L = min(L, p.n - 1)
        pol = optimal_placement(p, K, L)
        assert np.all(pol.q >= -1e-12)
        assert np.all(pol.q <= 1.0 + 1e-12)
        assert pol.q.sum() <= L + 1e-7


class TestOracleAgreement:
    """The closed form must match an accelerated projected-gradient solver."""

    def test_matches_projected_gradient(self):
        rng = np.random.default_rng(12)
        for _ in range(20):
            n = int(rng.integers(2, 9))
            p = random_profile(rng, n)
            L = int(rng.integers(1, n))
            pol = optimal_placement(p, K, L)
            q_star = oracle_placement(p, K, L)
            assert np.max(np.abs(pol.q - q_star)) <= 1e-4
            assert abs(asp(p, pol, K) - asp(p, q_star, K)) <= 1e-6

    def test_closed_form_never_below_oracle(self):
        rng = np.random.default_rng(13)
        for _ in range(10):
            p = random_profile(rng, 5)
            pol = optimal_placement(p, K, 2)
            q_star = oracle_placement(p, K, 2)
            assert asp(p, pol, K) >= asp(p, q_star, K) - 1e-9


class TestDifferenceBound:
    """The bound is a diagnostic for matched partitions, so the tests pin
    the formula itself rather than comparing against measured gaps."""

    def test_uniform_fractional_set_gives_zero(self):
        # sum/min over the fractional sqrt-profile equals |P|, R is empty
        assert_allclose(asp_difference_bound(PopularityProfile.uniform(4), K, 2),
                        0.0, atol=1e-15)

    def test_head_heavy_profile_reduces_to_head_term(self):
        p = PopularityProfile(np.array([0.9, 0.05, 0.05]))
        pol = optimal_placement(p, K, 2)
        assert pol.always_cache == (0,) and pol.fractional == (1, 2)
        expect = -(K.B / (K.A + K.C)) * 0.9
        assert_allclose(asp_difference_bound(p, K, 2), expect, rtol=1e-12)

    def test_matches_direct_formula(self):
        from edgecache.core import ZipfSpec
        p = ZipfSpec(3, 1.5).profile()
        pol = optimal_placement(p, K, 2)
        idx = list(pol.fractional)
        pbar = np.sqrt(p.values[idx])
        eta = len(idx) + (2 - len(pol.always_cache)) * (K.A + K.C - K.B) / K.B
        expect = K.C / (K.A + K.C - K.B) / eta * (pbar.sum() / pbar.min() - len(idx)) \
            - K.B / (K.A + K.C) * p.values[list(pol.always_cache)].sum()
        assert_allclose(asp_difference_bound(p, K, 2), expect, rtol=1e-12)

    def test_empty_fractional_set_rejected(self):
        p = PopularityProfile(np.array([1.0, 0.0, 0.0]))
        with pytest.raises(ValueError, match="degenerate"):
            asp_difference_bound(p, K, 2)
