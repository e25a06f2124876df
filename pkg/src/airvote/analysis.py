"""Closed-form and exact analytics for the sign detector.

For a received value ``y = sum_k rho_k s_k + v`` with independent votes
``s_k`` (+1 with probability p_k) and Gaussian noise, this module provides:

* detection statistics: E[y], the sub-Gaussian variance proxy tau^2 =
  sum rho^2 + noise_var, the true Var[y], the detection SNR E[y]^2 / tau^2,
  and the tail bound exp(-E[y]^2 / (2 tau^2));
* the normalized detection SNR ||rho||_1^2 / (K (||rho||_2^2 + noise_var)),
  a p-independent quantity in [0, 1] interpreted as the effective
  participation rate of voters;
* exact failure probabilities by vote enumeration (small K) and by binomial
  summation (equal gains), used as oracles for the Monte Carlo paths;
* the large-population limit of the normalized SNR under the disc geometry,
  and its cluster-mode analogue for selected relay gains.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr
from scipy.stats import binom

from .channel import CellConfig, path_loss, sample_distance, sample_rayleigh_amplitude
from .errors import CapacityError
from .rng import SCOPE_CHANNEL, substream

# 2^K vote patterns are enumerated exactly up to this many users.
MAX_ENUM_USERS = 24
_ENUM_CHUNK = 1 << 20


@dataclass(frozen=True)
class DetectionStats:
    """Moments and bounds of the detector input for one gain realization."""

    mean_y: float
    tau_sq: float
    var_y: float
    snr_d: float
    nsnr: float
    chernoff_bound: float


def _chernoff(mean_y: float, tau_sq: float) -> float:
    # The tail bound only controls Prob[y < 0] when E[y] > 0; outside that
    # regime return the vacuous bound 1 so dominance stays testable.
    if mean_y <= 0.0 or tau_sq <= 0.0:
        return 1.0
    return math.exp(-(mean_y * mean_y) / (2.0 * tau_sq))


def detection_stats(gains, p, noise_var: float) -> DetectionStats:
    """Exact detector moments for given gains and per-user success probs."""
    g = np.asarray(gains, dtype=float)
    pp = np.asarray(p, dtype=float)
    if g.ndim != 1 or g.size == 0:
        raise ValueError("gains must be a nonempty vector")
    if pp.shape != g.shape:
        raise ValueError(f"success probabilities {pp.shape} must match gains {g.shape}")
    if np.any(g < 0.0):
        raise ValueError("gains must be nonnegative")
    if np.any((pp < 0.0) | (pp > 1.0)):
        raise ValueError("success probabilities must lie in [0, 1]")
    if noise_var < 0.0:
        raise ValueError(f"noise variance must be >= 0, got {noise_var}")
    k = g.size
    mean_y = float(g @ (2.0 * pp - 1.0))
    sum_sq = float(g @ g)
    tau_sq = sum_sq + noise_var
    var_y = float((4.0 * g * g * pp * (1.0 - pp)).sum()) + noise_var
    snr_d = (mean_y * mean_y) / tau_sq if tau_sq > 0.0 else 0.0
    nsnr = float(g.sum()) ** 2 / (k * tau_sq) if tau_sq > 0.0 else 0.0
    return DetectionStats(
        mean_y=mean_y,
        tau_sq=tau_sq,
        var_y=var_y,
        snr_d=snr_d,
        nsnr=nsnr,
        chernoff_bound=_chernoff(mean_y, tau_sq),
    )


def chernoff_failure_bound(stats: DetectionStats) -> float:
    """Sub-Gaussian upper bound on the failure probability, in (0, 1]."""
    return _chernoff(stats.mean_y, stats.tau_sq)


def _enumerate_weighted_sums(gains: np.ndarray, p: np.ndarray):
    """All 2^n values of sum_k gains[k] * s_k with their probabilities."""
    sums = np.zeros(1)
    probs = np.ones(1)
    for gk, pk in zip(gains, p):
        sums = np.concatenate([sums + gk, sums - gk])
        probs = np.concatenate([probs * pk, probs * (1.0 - pk)])
    return sums, probs


def _exact_noise_free(gains: np.ndarray, p: np.ndarray) -> float:
    # Meet-in-the-middle: split users in two halves, enumerate each half,
    # then count sum_a + sum_b < 0 (plus half the mass of exact zeros, the
    # fair-coin tie rule) against the sorted second half.
    k = gains.size
    half = k // 2
    sums_a, probs_a = _enumerate_weighted_sums(gains[:half], p[:half])
    sums_b, probs_b = _enumerate_weighted_sums(gains[half:], p[half:])
    order = np.argsort(sums_b, kind="stable")
    sums_b = sums_b[order]
    cum = np.concatenate([[0.0], np.cumsum(probs_b[order])])
    lo = np.searchsorted(sums_b, -sums_a, side="left")
    hi = np.searchsorted(sums_b, -sums_a, side="right")
    below = cum[lo]
    at_zero = cum[hi] - cum[lo]
    return float(probs_a @ (below + 0.5 * at_zero))


def _exact_with_noise(gains: np.ndarray, p: np.ndarray, noise_var: float) -> float:
    k = gains.size
    sigma = math.sqrt(noise_var)
    total = 1 << k
    shifts = np.arange(k, dtype=np.uint64)
    q = 0.0
    for start in range(0, total, _ENUM_CHUNK):
        idx = np.arange(start, min(start + _ENUM_CHUNK, total), dtype=np.uint64)
        bits = (idx[:, None] >> shifts) & 1  # bit 1 -> vote +1
        signs = bits.astype(np.float64) * 2.0 - 1.0
        sums = signs @ gains
        probs = np.ones(idx.size)
        for j in range(k):
            probs *= np.where(bits[:, j] == 1, p[j], 1.0 - p[j])
        q += float(probs @ ndtr(-sums / sigma))
    return q


def exact_failure_probability(gains, p, noise_var: float) -> float:
    """Exact Prob[decode = -1] by enumeration of all vote patterns.

    For zero noise the Gaussian tail degenerates to an indicator and exact
    zero sums count half, mirroring the fair tie rule.  Capacity-bounded at
    ``MAX_ENUM_USERS`` users.
    """
    g = np.asarray(gains, dtype=float)
    pp = np.asarray(p, dtype=float)
    if g.ndim != 1 or g.size == 0:
        raise ValueError("gains must be a nonempty vector")
    if pp.shape != g.shape:
        raise ValueError(f"success probabilities {pp.shape} must match gains {g.shape}")
    if noise_var < 0.0:
        raise ValueError(f"noise variance must be >= 0, got {noise_var}")
    if g.size > MAX_ENUM_USERS:
        raise CapacityError(
            f"exact enumeration supports at most {MAX_ENUM_USERS} users, got {g.size}"
        )
    if noise_var == 0.0:
        return _exact_noise_free(g, pp)
    return _exact_with_noise(g, pp, noise_var)


def ideal_vote_failure(num_users: int, p_loc: float) -> float:
    """Failure probability of an ideal equal-weight majority vote.

    Binomial summation: fewer than half correct fails, an exact split (even
    vote counts) fails with probability one half.
    """
    if num_users < 1:
        raise ValueError(f"need at least one voter, got {num_users}")
    if not (0.0 <= p_loc <= 1.0):
        raise ValueError(f"p_loc must lie in [0, 1], got {p_loc}")
    threshold = math.ceil(num_users / 2) - 1
    q = float(binom.cdf(threshold, num_users, p_loc))
    if num_users % 2 == 0:
        q += 0.5 * float(binom.pmf(num_users // 2, num_users, p_loc))
    return q


def e_sqrt_path_loss(cfg: CellConfig) -> float:
    """E[sqrt(path_loss(r))] under the disc placement density 2r / R^2."""
    t = cfg.r0_m / cfg.R_m
    a = cfg.alpha
    if a == 4.0:
        # Removable singularity: the power integral turns logarithmic.
        return t * t * (1.0 + 2.0 * math.log(1.0 / t))
    return -a / (4.0 - a) * t * t + 4.0 / (4.0 - a) * t ** (a / 2.0)


def e_path_loss(cfg: CellConfig) -> float:
    """E[path_loss(r)] under the disc placement density 2r / R^2."""
    t = cfg.r0_m / cfg.R_m
    a = cfg.alpha
    if a == 2.0:
        return t * t * (1.0 + 2.0 * math.log(1.0 / t))
    return -a / (2.0 - a) * t * t + 2.0 / (2.0 - a) * t ** a


def nsnr_large_k(cfg: CellConfig, num_users: int | None = None) -> float:
    """Large-population normalized detection SNR for the disc geometry.

    Law-of-large-numbers limit: (pi/4) E[sqrt(PL)]^2 / (E[PL] + nv / K).
    With ``num_users`` omitted the noise term vanishes (the noiseless /
    infinite-population ceiling).
    """
    num = (math.pi / 4.0) * e_sqrt_path_loss(cfg) ** 2
    den = e_path_loss(cfg)
    if num_users is not None:
        if num_users < 1:
            raise ValueError(f"need at least one user, got {num_users}")
        den += cfg.noise_var / num_users
    return num / den


def nsnr_monte_carlo(
    cfg: CellConfig,
    num_users: int,
    draws: int,
    master_seed: int,
) -> tuple[float, float]:
    """Monte Carlo mean of the per-realization normalized detection SNR.

    Returns (mean, standard error).  Unlike :func:`nsnr_large_k` this
    averages the ratio itself, which for small populations sits visibly
    above the ratio-of-means limit.
    """
    if num_users < 1:
        raise ValueError(f"need at least one user, got {num_users}")
    if draws < 2:
        raise ValueError(f"need at least two draws, got {draws}")
    gen = substream(master_seed, SCOPE_CHANNEL)
    nv = cfg.noise_var
    vals = np.empty(draws)
    chunk = max(1, 2_000_000 // num_users)
    done = 0
    while done < draws:
        n = min(chunk, draws - done)
        r = sample_distance(gen, cfg, (n, num_users))
        amp = sample_rayleigh_amplitude(gen, (n, num_users))
        g = np.sqrt(path_loss(r, cfg)) * amp
        vals[done : done + n] = g.sum(axis=1) ** 2 / (num_users * ((g * g).sum(axis=1) + nv))
        done += n
    mean = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(draws))
    return mean, se


def cluster_nsnr(
    selected_gains,
    cluster_size: int | None = None,
    p_loc: float | None = None,
    noise_var: float = 0.0,
) -> float:
    """Normalized detection SNR of a relay selection.

    ``selected_gains`` holds one chosen gain per cluster (0 for a silent
    cluster).  With ``noise_var > 0`` the effective noise term scales with
    the cluster size and the local vote margin; the noise-free form is the
    relay-selection objective itself.  An all-silent selection is 0.
    """
    s = np.asarray(selected_gains, dtype=float)
    if s.ndim != 1 or s.size == 0:
        raise ValueError("selected gains must be a nonempty vector")
    if np.any(s < 0.0):
        raise ValueError("selected gains must be nonnegative")
    if noise_var < 0.0:
        raise ValueError(f"noise variance must be >= 0, got {noise_var}")
    noise_term = 0.0
    if noise_var > 0.0:
        if cluster_size is None or p_loc is None:
            raise ValueError("noisy cluster nSNR needs cluster_size and p_loc")
        noise_term = cluster_size * (2.0 * p_loc - 1.0) ** 2 * noise_var
    den = float(s @ s) + noise_term
    if den <= 0.0:
        return 0.0
    return float(s.sum()) ** 2 / (s.size * den)
