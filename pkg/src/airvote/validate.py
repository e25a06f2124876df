"""Self-contained oracle cross-checks runnable from the CLI or service.

Each check pits an independent reference (binomial summation, exhaustive
enumeration, closed-form moments, quadrature) against the matching Monte
Carlo or analytic path, at tolerances wide enough to be deterministic for
the fixed seed yet tight enough to catch real regressions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from . import analysis, montecarlo, relay
from .channel import CellConfig, draw_user_channels, path_loss
from .montecarlo import McParams
from .relay import ClusterLayout
from .rng import SCOPE_BENCH, substream


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _check_ideal_vs_binomial(seed: int) -> CheckResult:
    k, p, trials = 21, 0.55, 200_000
    params = McParams(cell=CellConfig(), K=k, p_loc=p)
    est = montecarlo.estimate_failure("ideal", params, trials, seed)
    exact = analysis.ideal_vote_failure(k, p)
    se = math.sqrt(exact * (1.0 - exact) / trials)
    ok = abs(est.q_hat - exact) <= 3.0 * se
    return CheckResult(
        "ideal majority vote matches binomial tail",
        ok,
        f"mc={est.q_hat:.5f} exact={exact:.5f} tol={3 * se:.5f}",
    )


def _check_aircomp_vs_enumeration(seed: int) -> CheckResult:
    k, p, trials = 12, 0.7, 200_000
    cfg = CellConfig(R_m=300.0, r0_m=10.0, P_dBW=-20.0)
    gains = draw_user_channels(substream(seed, SCOPE_BENCH, 1), k, cfg).gains
    params = McParams(
        cell=cfg, K=k, p_loc=p, channel_mode="frozen-channel", frozen_gains=gains
    )
    est = montecarlo.estimate_failure("aircomp_pc", params, trials, seed)
    exact = analysis.exact_failure_probability(gains, np.full(k, p), cfg.noise_var)
    ok = est.ci95_lo <= exact <= est.ci95_hi
    return CheckResult(
        "frozen-channel aggregation matches exact enumeration",
        ok,
        f"mc={est.q_hat:.5f} ci=[{est.ci95_lo:.5f},{est.ci95_hi:.5f}] exact={exact:.5f}",
    )


def _check_bound_dominates(seed: int) -> CheckResult:
    gen = substream(seed, SCOPE_BENCH, 2)
    worst = 0.0
    for _ in range(100):
        k = int(gen.integers(1, 13))
        gains = gen.random(k) * 2.0
        p = 0.5 + 0.5 * gen.random(k)
        nv = float(gen.random()) * 0.5
        exact = analysis.exact_failure_probability(gains, p, nv)
        bound = analysis.detection_stats(gains, p, nv).chernoff_bound
        worst = max(worst, exact - bound)
    ok = worst <= 1e-12
    return CheckResult(
        "tail bound dominates exact failure probability",
        ok,
        f"max(exact - bound)={worst:.3e}",
    )


def _check_nsnr_closed_form(seed: int) -> CheckResult:
    cfg = CellConfig(R_m=1000.0, r0_m=10.0, alpha=3.0)
    e_sqrt = quad(lambda r: math.sqrt(path_loss(r, cfg)) * 2.0 * r / cfg.R_m**2, 0.0, cfg.R_m, points=[cfg.r0_m])[0]
    e_pl = quad(lambda r: path_loss(r, cfg) * 2.0 * r / cfg.R_m**2, 0.0, cfg.R_m, points=[cfg.r0_m])[0]
    ref = (math.pi / 4.0) * e_sqrt**2 / e_pl
    val = analysis.nsnr_large_k(cfg)
    ok = abs(val - ref) <= 1e-9
    return CheckResult(
        "closed-form channel moments match quadrature",
        ok,
        f"closed={val:.8f} quadrature={ref:.8f}",
    )


def _check_relay_sandwich(seed: int) -> CheckResult:
    gen = substream(seed, SCOPE_BENCH, 3)
    cfg = CellConfig(R_m=300.0, r0_m=10.0)
    layout = ClusterLayout(C=3, K_C=4, L=2)
    violations = 0
    for _ in range(100):
        gains = relay.draw_relay_gains(gen, layout, cfg)
        strongest = relay.select_strongest(gains).objective
        greedy = relay.select_greedy(gains, mode="exact").objective
        best = relay.select_exhaustive(gains).objective
        if not (strongest <= greedy + 1e-12 and greedy <= best + 1e-12):
            violations += 1
    return CheckResult(
        "selection objectives form a sandwich (strongest <= greedy <= exhaustive)",
        violations == 0,
        f"violations={violations}/100",
    )


def _check_channel_moments(seed: int) -> CheckResult:
    cfg = CellConfig(R_m=300.0, r0_m=10.0, alpha=3.0)
    draw = draw_user_channels(substream(seed, SCOPE_BENCH, 4), 100_000, cfg)
    target = analysis.e_sqrt_path_loss(cfg) * math.sqrt(math.pi) / 2.0
    var = analysis.e_path_loss(cfg) - target**2
    se = math.sqrt(var / draw.num_users)
    err = abs(float(draw.gains.mean()) - target)
    ok = err <= 3.0 * se
    return CheckResult(
        "mean drawn gain matches closed-form moment",
        ok,
        f"|mean - target|={err:.2e} tol={3 * se:.2e}",
    )


def _check_nsnr_range(seed: int) -> CheckResult:
    gen = substream(seed, SCOPE_BENCH, 5)
    bad = 0
    for _ in range(50):
        k = int(gen.integers(1, 40))
        gains = gen.random(k) * 3.0
        nv = float(gen.random())
        stats = analysis.detection_stats(gains, np.full(k, 0.75), nv)
        if not (0.0 <= stats.nsnr <= 1.0 + 1e-12):
            bad += 1
    return CheckResult(
        "normalized detection SNR stays inside [0, 1]",
        bad == 0,
        f"violations={bad}/50",
    )


def run_validation_suite(master_seed: int = 0) -> list[CheckResult]:
    """All oracle cross-checks, deterministic in the master seed."""
    checks = (
        _check_ideal_vs_binomial,
        _check_aircomp_vs_enumeration,
        _check_bound_dominates,
        _check_nsnr_closed_form,
        _check_relay_sandwich,
        _check_channel_moments,
        _check_nsnr_range,
    )
    return [check(master_seed) for check in checks]
