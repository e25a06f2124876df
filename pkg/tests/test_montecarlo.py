"""Monte Carlo failure estimation: oracles, determinism, sweeps."""

import math
from dataclasses import replace

import numpy as np
import pytest

from airvote import analysis
from airvote.channel import CellConfig, draw_user_channels
from airvote.errors import ConfigError
from airvote.montecarlo import (
    CSV_COLUMNS,
    McEstimate,
    McParams,
    estimate_failure,
    parse_scheme_label,
    scheme_label,
    sweep,
    wilson_interval,
)
from airvote.relay import ClusterLayout
from airvote.rng import SCOPE_MC_FROZEN, substream

CELL = CellConfig(R_m=300.0, r0_m=10.0, alpha=3.0).with_symbol_power_dbw(-50.0)
NOISELESS = CellConfig(R_m=300.0, r0_m=10.0, alpha=3.0, N0_dBm=-math.inf)


class TestWilson:
    def test_basic_properties(self):
        lo, hi = wilson_interval(10, 100)
        assert 0.0 <= lo <= 0.1 <= hi <= 1.0

    def test_zero_failures(self):
        lo, hi = wilson_interval(0, 1000)
        assert lo == 0.0
        assert 0.0 < hi < 0.01

    def test_all_failures(self):
        lo, hi = wilson_interval(1000, 1000)
        assert 0.99 < lo < 1.0
        assert hi == 1.0

    def test_estimate_invariants(self):
        est = McEstimate.from_counts(3, 1000)
        assert est.ci95_lo <= est.q_hat <= est.ci95_hi
        assert est.q_hat == pytest.approx(0.003)


class TestEstimateFailure:
    def test_ideal_matches_binomial_tail(self):
        params = McParams(cell=CELL, K=21, p_loc=0.55)
        est = estimate_failure("ideal", params, 200_000, 17)
        exact = analysis.ideal_vote_failure(21, 0.55)
        se = math.sqrt(exact * (1.0 - exact) / est.trials)
        assert abs(est.q_hat - exact) <= 3.0 * se

    def test_frozen_channel_matches_exact_oracle(self):
        gains = draw_user_channels(substream(99, 1), 12, CELL).gains
        params = McParams(
            cell=CELL, K=12, p_loc=0.7, channel_mode="frozen-channel", frozen_gains=gains
        )
        est = estimate_failure("aircomp_pc", params, 400_000, 18)
        exact = analysis.exact_failure_probability(gains, np.full(12, 0.7), CELL.noise_var)
        assert est.ci95_lo <= exact <= est.ci95_hi

    def test_perfect_votes_never_fail(self):
        params = McParams(cell=NOISELESS, K=10, p_loc=1.0)
        assert estimate_failure("aircomp_pc", params, 50_000, 19).q_hat == 0.0

    def test_deterministic_in_seed(self):
        params = McParams(cell=CELL, K=9, p_loc=0.6)
        a = estimate_failure("aircomp_pc", params, 70_000, 20)
        b = estimate_failure("aircomp_pc", params, 70_000, 20)
        assert a == b

    def test_thread_count_does_not_change_counts(self):
        params = McParams(cell=CELL, K=9, p_loc=0.6)
        single = estimate_failure("aircomp_pc", params, 150_000, 21, threads=1)
        pooled = estimate_failure("aircomp_pc", params, 150_000, 21, threads=4)
        assert single == pooled

    def test_cluster_thread_determinism(self):
        layout = ClusterLayout(C=4, K_C=9, L=3)
        params = McParams(cell=CELL, K=36, p_loc=0.55, layout=layout)
        single = estimate_failure("cluster", params, 100_000, 22, threads=1)
        pooled = estimate_failure("cluster", params, 100_000, 22, threads=3)
        assert single == pooled

    def test_degenerate_cluster_equals_aircomp(self):
        # C=K single-user clusters with one relay each follow the exact
        # same draw sequence as the direct scheme, so the counts coincide
        # batch for batch.
        layout = ClusterLayout(C=11, K_C=1, L=1)
        cluster = McParams(cell=CELL, K=11, p_loc=0.6, layout=layout, selector="strongest")
        direct = McParams(cell=CELL, K=11, p_loc=0.6)
        a = estimate_failure("cluster", cluster, 120_000, 23)
        b = estimate_failure("aircomp_pc", direct, 120_000, 23)
        assert a == b

    def test_frozen_geometry_mode(self):
        params = McParams(cell=CELL, K=7, p_loc=0.8, channel_mode="frozen-geometry")
        est = estimate_failure("aircomp_pc", params, 50_000, 24)
        assert 0.0 < est.q_hat < 0.5

    def test_scheme_validation(self):
        params = McParams(cell=CELL, K=5, p_loc=0.6)
        with pytest.raises(ConfigError):
            estimate_failure("osmosis", params, 10, 0)
        with pytest.raises(ConfigError):
            estimate_failure("cluster", params, 10, 0)  # no layout

    def test_params_validation(self):
        with pytest.raises(ConfigError):
            McParams(cell=CELL, K=0, p_loc=0.5)
        with pytest.raises(ConfigError):
            McParams(cell=CELL, K=5, p_loc=1.5)
        with pytest.raises(ConfigError):
            McParams(cell=CELL, K=5, p_loc=0.5, layout=ClusterLayout(C=2, K_C=9, L=1))
        with pytest.raises(ConfigError):
            McParams(cell=CELL, K=5, p_loc=0.5, channel_mode="sideways")

    def test_frozen_gains_shape_checked(self):
        params = McParams(
            cell=CELL, K=5, p_loc=0.5, channel_mode="frozen-channel",
            frozen_gains=np.ones(4),
        )
        with pytest.raises(ConfigError):
            estimate_failure("aircomp_pc", params, 10, 0)


class TestSchemeLabels:
    def test_round_trip(self):
        assert parse_scheme_label("ideal") == ("ideal", None)
        assert parse_scheme_label("aircomp_pc") == ("aircomp_pc", None)
        assert parse_scheme_label("cluster-greedy-exact") == ("cluster", "greedy-exact")
        assert scheme_label("cluster", "strongest") == "cluster-strongest"

    def test_unknown_label(self):
        with pytest.raises(ConfigError):
            parse_scheme_label("cluster-fastest")


class TestSweep:
    def test_grid_and_overlays(self):
        base = McParams(cell=CELL, K=21, p_loc=0.55)
        records = sweep(["aircomp_pc"], "P_s_dBW", [-60.0, -50.0, -40.0], base, 20_000, 31)
        assert len(records) == 3
        assert [r.P_s_dBW for r in records] == [-60.0, -50.0, -40.0]
        for rec in records:
            assert rec.scheme == "aircomp_pc"
            assert rec.C == rec.K_C == rec.L == 0
            assert rec.nsnr == pytest.approx(0.106, abs=0.002)
            assert 0.0 < rec.chernoff <= 1.0
            assert rec.K_eff == round(21 * rec.nsnr)
            # row is self-describing: its seed reproduces the estimate
            params = McParams(cell=CELL.with_symbol_power_dbw(rec.P_s_dBW), K=21, p_loc=0.55)
            again = estimate_failure("aircomp_pc", params, 20_000, rec.seed)
            assert again == rec.estimate

    def test_distinct_derived_seeds(self):
        base = McParams(cell=CELL, K=9, p_loc=0.55)
        records = sweep(["ideal", "aircomp_pc"], "K", [7, 9], base, 1000, 32)
        seeds = [r.seed for r in records]
        assert len(set(seeds)) == len(seeds)

    def test_reproducible(self):
        base = McParams(cell=CELL, K=9, p_loc=0.55)
        a = sweep(["ideal"], "K", [5, 9], base, 5000, 33)
        b = sweep(["ideal"], "K", [5, 9], base, 5000, 33)
        assert a == b

    def test_cluster_k_axis_rebuilds_layout(self):
        base = McParams(cell=CELL, K=18, p_loc=0.55, layout=ClusterLayout(C=2, K_C=9, L=2))
        records = sweep(["cluster-strongest"], "K", [18, 36], base, 5000, 34)
        assert [r.C for r in records] == [2, 4]
        assert all(r.K_C == 9 for r in records)
        assert all(r.scheme == "cluster-strongest" for r in records)

    def test_cluster_k_axis_requires_multiple(self):
        base = McParams(cell=CELL, K=18, p_loc=0.55, layout=ClusterLayout(C=2, K_C=9, L=2))
        with pytest.raises(ConfigError):
            sweep(["cluster-strongest"], "K", [20], base, 100, 35)

    def test_non_cluster_schemes_ride_l_axis(self):
        base = McParams(cell=CELL, K=18, p_loc=0.55, layout=ClusterLayout(C=2, K_C=9, L=1))
        records = sweep(["ideal", "cluster-greedy-exact"], "L", [1, 3], base, 2000, 36)
        ideal = [r for r in records if r.scheme == "ideal"]
        clustered = [r for r in records if r.scheme.startswith("cluster")]
        assert len(ideal) == 2 and ideal[0].estimate == ideal[1].estimate is not None
        assert [r.L for r in clustered] == [1, 3]

    def test_bound_dominates_estimates(self):
        base = McParams(cell=CELL, K=15, p_loc=0.55)
        records = sweep(["ideal", "aircomp_pc"], "p_loc", [0.55, 0.7, 0.9], base, 50_000, 37)
        for rec in records:
            se = rec.estimate.std_error
            assert rec.estimate.q_hat <= rec.chernoff + 3.0 * se

    def test_record_dict_matches_columns(self):
        base = McParams(cell=CELL, K=5, p_loc=0.55)
        (rec,) = sweep(["ideal"], "K", [5], base, 1000, 38)
        assert tuple(rec.as_dict().keys()) == CSV_COLUMNS

    def test_empty_grid_rejected(self):
        base = McParams(cell=CELL, K=5, p_loc=0.55)
        with pytest.raises(ConfigError):
            sweep(["ideal"], "K", [], base, 100, 39)
        with pytest.raises(ConfigError):
            sweep([], "K", [5], base, 100, 39)
