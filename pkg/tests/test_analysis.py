"""Detection statistics, bounds, exact oracles, and channel-moment analytics."""

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.stats import binom

from airvote.analysis import (
    chernoff_failure_bound,
    cluster_nsnr,
    detection_stats,
    e_path_loss,
    e_sqrt_path_loss,
    exact_failure_probability,
    ideal_vote_failure,
    nsnr_large_k,
    nsnr_monte_carlo,
)
from airvote.channel import CellConfig, path_loss
from airvote.errors import CapacityError
from airvote.rng import substream


def brute_force_failure(gains, p, noise_var):
    """Independent oracle: direct sum over all vote patterns with erfc tails."""
    q = 0.0
    for pattern in itertools.product([1.0, -1.0], repeat=len(gains)):
        prob = 1.0
        for s, pk in zip(pattern, p):
            prob *= pk if s > 0 else 1.0 - pk
        a = sum(g * s for g, s in zip(gains, pattern))
        if noise_var > 0.0:
            q += prob * 0.5 * math.erfc(a / math.sqrt(2.0 * noise_var))
        elif a < 0.0:
            q += prob
        elif a == 0.0:
            q += 0.5 * prob
    return q


class TestDetectionStats:
    def test_worked_example(self):
        stats = detection_stats([1.0, 1.0], [0.75, 0.75], 0.5)
        assert stats.mean_y == pytest.approx(1.0)
        assert stats.tau_sq == pytest.approx(2.5)
        assert stats.snr_d == pytest.approx(0.4)
        assert stats.chernoff_bound == pytest.approx(math.exp(-0.2))
        assert stats.nsnr == pytest.approx(0.8)
        assert stats.var_y == pytest.approx(4.0 * 2 * 0.75 * 0.25 + 0.5)

    def test_equal_gains_noiseless_nsnr_is_one(self):
        stats = detection_stats(np.ones(3), np.full(3, 0.9), 0.0)
        assert stats.nsnr == 1.0

    def test_silent_user_halves_nsnr(self):
        assert detection_stats([1.0, 0.0], [0.8, 0.8], 0.0).nsnr == pytest.approx(0.5)

    def test_variance_never_exceeds_tau_sq(self):
        gen = substream(21, 1)
        for _ in range(200):
            k = int(gen.integers(1, 12))
            stats = detection_stats(gen.random(k), gen.random(k), float(gen.random()))
            assert stats.var_y <= stats.tau_sq + 1e-12

    def test_variance_equality_iff_coin_votes(self):
        g = np.array([0.4, 1.1, 0.6])
        equal = detection_stats(g, np.full(3, 0.5), 0.3)
        assert equal.var_y == pytest.approx(equal.tau_sq)
        off = detection_stats(g, np.array([0.5, 0.5, 0.6]), 0.3)
        assert off.var_y < off.tau_sq

    def test_validation(self):
        with pytest.raises(ValueError):
            detection_stats([], [], 0.0)
        with pytest.raises(ValueError):
            detection_stats([1.0], [1.5], 0.0)
        with pytest.raises(ValueError):
            detection_stats([-1.0], [0.5], 0.0)


class TestChernoffBound:
    def test_vacuous_at_zero_mean(self):
        stats = detection_stats([1.0], [0.5], 0.0)
        assert chernoff_failure_bound(stats) == 1.0

    def test_vacuous_below_half(self):
        stats = detection_stats([1.0, 1.0], [0.3, 0.3], 0.1)
        assert chernoff_failure_bound(stats) == 1.0

    def test_worked_example(self):
        stats = detection_stats([1.0, 1.0], [0.75, 0.75], 0.5)
        assert chernoff_failure_bound(stats) == pytest.approx(0.818730753, abs=1e-9)

    def test_dominates_exact_probability(self):
        gen = substream(21, 2)
        for _ in range(100):
            k = int(gen.integers(1, 11))
            gains = gen.random(k) * 2.0
            p = 0.5 + 0.5 * gen.random(k)
            nv = float(gen.random())
            exact = exact_failure_probability(gains, p, nv)
            bound = detection_stats(gains, p, nv).chernoff_bound
            assert exact <= bound + 1e-12


class TestExactFailureProbability:
    def test_single_user_gaussian_tail(self):
        q = exact_failure_probability([1.0], [1.0], 1.0)
        assert q == pytest.approx(0.15865525393145707, abs=1e-12)

    def test_equal_gains_reduce_to_binomial_tail(self):
        q = exact_failure_probability(np.ones(21), np.full(21, 0.55), 0.0)
        assert q == pytest.approx(float(binom.cdf(10, 21, 0.55)), abs=1e-12)

    @pytest.mark.parametrize("noise_var", [0.0, 0.3, 2.0])
    def test_matches_brute_force(self, noise_var):
        gen = substream(21, 3)
        for _ in range(20):
            k = int(gen.integers(1, 9))
            gains = gen.random(k) * 3.0
            p = gen.random(k)
            expected = brute_force_failure(list(gains), list(p), noise_var)
            got = exact_failure_probability(gains, p, noise_var)
            assert got == pytest.approx(expected, abs=1e-12)

    def test_exact_zero_sum_counts_half(self):
        # Two equal gains, always-correct vs always-wrong: sum is 0 surely.
        q = exact_failure_probability([1.0, 1.0], [1.0, 0.0], 0.0)
        assert q == pytest.approx(0.5)

    def test_monte_carlo_cross_check(self):
        gen = substream(21, 4)
        gains = gen.random(10) * 2.0
        p = 0.5 + 0.4 * gen.random(10)
        nv = 0.7
        exact = exact_failure_probability(gains, p, nv)
        trials = 200_000
        votes = np.where(gen.random((trials, 10)) < p, 1.0, -1.0)
        y = votes @ gains + gen.normal(0.0, math.sqrt(nv), trials)
        q_mc = float((y < 0).mean())
        assert abs(q_mc - exact) <= 3.0 * math.sqrt(exact * (1.0 - exact) / trials)

    def test_capacity_guard(self):
        with pytest.raises(CapacityError):
            exact_failure_probability(np.ones(25), np.full(25, 0.6), 0.0)


class TestIdealVoteFailure:
    @pytest.mark.parametrize("k,p", [(1, 0.55), (5, 0.7), (9, 0.55), (12, 0.6), (15, 0.9)])
    def test_matches_enumeration(self, k, p):
        expected = brute_force_failure([1.0] * k, [p] * k, 0.0)
        assert ideal_vote_failure(k, p) == pytest.approx(expected, abs=1e-12)

    def test_even_tie_counts_half(self):
        # K=2: failure = (1-p)^2 + p(1-p) = 1-p.
        assert ideal_vote_failure(2, 0.7) == pytest.approx(0.3)


class TestLargePopulationNsnr:
    def test_effective_participation_constant(self):
        cfg = CellConfig(R_m=300.0, r0_m=10.0, alpha=3.0)
        assert nsnr_large_k(cfg) == pytest.approx(0.106, abs=0.001)

    def test_unit_ratio_limit_is_quarter_pi(self):
        cfg = CellConfig(R_m=10.0 * (1.0 + 1e-9), r0_m=10.0, alpha=3.0)
        assert nsnr_large_k(cfg) == pytest.approx(math.pi / 4.0, abs=1e-6)

    def test_matches_quadrature(self):
        cfg = CellConfig(R_m=1000.0, r0_m=10.0, alpha=3.0)
        e_sqrt = quad(
            lambda r: math.sqrt(path_loss(r, cfg)) * 2.0 * r / cfg.R_m**2,
            0.0, cfg.R_m, points=[cfg.r0_m],
        )[0]
        e_pl = quad(
            lambda r: path_loss(r, cfg) * 2.0 * r / cfg.R_m**2,
            0.0, cfg.R_m, points=[cfg.r0_m],
        )[0]
        assert e_sqrt_path_loss(cfg) == pytest.approx(e_sqrt, abs=1e-10)
        assert e_path_loss(cfg) == pytest.approx(e_pl, abs=1e-10)
        assert nsnr_large_k(cfg) == pytest.approx((math.pi / 4.0) * e_sqrt**2 / e_pl, rel=1e-9)

    @pytest.mark.parametrize("alpha", [2.0, 4.0])
    def test_singular_exponents_use_continuous_limit(self, alpha):
        near = CellConfig(R_m=500.0, r0_m=10.0, alpha=alpha + 1e-7)
        at = CellConfig(R_m=500.0, r0_m=10.0, alpha=alpha)
        assert e_sqrt_path_loss(at) == pytest.approx(e_sqrt_path_loss(near), rel=1e-5)
        assert e_path_loss(at) == pytest.approx(e_path_loss(near), rel=1e-5)

    def test_finite_population_noise_term(self):
        cfg = CellConfig(R_m=300.0, r0_m=10.0, alpha=3.0, P_dBW=-40.0, M=1000, N0_dBm=-80.0)
        assert nsnr_large_k(cfg, 10) < nsnr_large_k(cfg, 10_000) < nsnr_large_k(cfg)

    def test_agrees_with_direct_monte_carlo_at_large_k(self):
        cfg = CellConfig(R_m=300.0, r0_m=10.0, alpha=3.0)
        closed = nsnr_large_k(cfg, 10_000)
        mc, _ = nsnr_monte_carlo(cfg, 10_000, 400, 42)
        assert abs(mc - closed) / closed <= 0.03

    def test_small_population_ratio_average_sits_above_limit(self):
        # For K = 54 in the wide default cell the mean of the per-draw
        # ratio is several times the ratio-of-means closed form; both are
        # reported and neither is treated as ground truth.
        cfg = CellConfig()
        mc, se = nsnr_monte_carlo(cfg, 54, 20_000, 7)
        assert mc > 2.0 * nsnr_large_k(cfg, 54)
        assert se < 0.01


class TestClusterNsnr:
    def test_equal_gains_noise_free(self):
        assert cluster_nsnr(np.ones(5)) == 1.0

    def test_dominant_relay(self):
        assert cluster_nsnr([10.0, 1.0, 1.0]) == pytest.approx(144.0 / 306.0)

    def test_dropping_dominant_relay_raises_value(self):
        assert cluster_nsnr([0.0, 1.0, 1.0]) == pytest.approx(2.0 / 3.0)

    def test_all_silent_is_zero(self):
        assert cluster_nsnr([0.0, 0.0]) == 0.0

    def test_noisy_form(self):
        val = cluster_nsnr([1.0, 1.0], cluster_size=9, p_loc=0.55, noise_var=0.5)
        expected = 4.0 / (2.0 * (2.0 + 9 * 0.01 * 0.5))
        assert val == pytest.approx(expected)

    def test_noise_requires_cluster_context(self):
        with pytest.raises(ValueError):
            cluster_nsnr([1.0], noise_var=0.5)

    @given(
        st.lists(st.floats(0.0, 100.0), min_size=1, max_size=8),
        st.floats(0.1, 50.0),
    )
    @settings(max_examples=200, deadline=None)
    def test_scale_and_permutation_invariance(self, gains, scale):
        base = cluster_nsnr(gains)
        assert cluster_nsnr([g * scale for g in gains]) == pytest.approx(base, abs=1e-12)
        assert cluster_nsnr(list(reversed(gains))) == pytest.approx(base, abs=1e-12)


class TestNsnrRange:
    def test_random_configs_stay_in_unit_interval(self):
        gen = substream(22, 1)
        for _ in range(2000):
            k = int(gen.integers(1, 30))
            stats = detection_stats(gen.random(k) * 5.0, gen.random(k), float(gen.random()))
            assert 0.0 <= stats.nsnr <= 1.0 + 1e-12

    def test_unit_value_requires_equal_gains_and_no_noise(self):
        assert detection_stats(np.ones(4), np.full(4, 0.7), 1e-6).nsnr < 1.0
        assert detection_stats([1.0, 1.0001], [0.7, 0.7], 0.0).nsnr < 1.0

    def test_nsnr_scale_invariant_without_noise(self):
        g = np.array([0.2, 1.4, 0.9])
        a = detection_stats(g, np.full(3, 0.8), 0.0).nsnr
        b = detection_stats(5.0 * g, np.full(3, 0.8), 0.0).nsnr
        assert a == pytest.approx(b, abs=1e-14)

    def test_nsnr_independent_of_p(self):
        g = np.array([0.2, 1.4, 0.9])
        a = detection_stats(g, np.full(3, 0.51), 0.2).nsnr
        b = detection_stats(g, np.full(3, 0.99), 0.2).nsnr
        assert a == b
