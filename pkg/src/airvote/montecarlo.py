"""Failure-probability estimation and parameter sweeps.

Trials are partitioned into fixed-size batches; every batch owns a counter
substream and contributes an integer failure count, so an estimate is a pure
fold over per-batch counts and is identical for any execution schedule or
worker count.  Within a batch the draw order is fixed per scheme:

* ideal:        votes, decode tie coins
* aircomp_pc:   distances, fading, votes, noise, decode tie coins
* cluster:      cluster distances, relay fading, votes, fusion tie coins,
                noise, decode tie coins

Frozen channel modes skip the corresponding per-trial draws and take their
fixed realization from a dedicated substream of the master seed.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy.stats import norm

from . import analysis, relay
from .channel import CellConfig, path_loss, sample_distance, sample_rayleigh_amplitude
from .errors import ConfigError
from .relay import ClusterLayout
from .rng import (
    SCOPE_MC_BATCH,
    SCOPE_MC_FROZEN,
    SCOPE_OVERLAY,
    SCOPE_RECORD,
    derive_seed,
    substream,
)

SCHEMES = ("ideal", "aircomp_pc", "cluster")
CHANNEL_MODES = ("redraw", "frozen-geometry", "frozen-channel")

DEFAULT_BATCH_SIZE = 1 << 16

_Z95 = float(norm.ppf(0.975))


def wilson_interval(failures: int, trials: int, z: float = _Z95) -> tuple[float, float]:
    """Wilson 95% interval; stays valid down to zero observed failures."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if not (0 <= failures <= trials):
        raise ValueError("failures must lie in [0, trials]")
    p = failures / trials
    z2 = z * z
    denom = 1.0 + z2 / trials
    center = (p + z2 / (2.0 * trials)) / denom
    half = (z / denom) * math.sqrt(p * (1.0 - p) / trials + z2 / (4.0 * trials * trials))
    return max(0.0, center - half), min(1.0, center + half)


@dataclass(frozen=True)
class McEstimate:
    """Failure-rate estimate with a Wilson 95% confidence interval."""

    trials: int
    failures: int
    q_hat: float
    ci95_lo: float
    ci95_hi: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.ci95_lo <= self.q_hat <= self.ci95_hi <= 1.0):
            raise ValueError("interval must satisfy 0 <= lo <= q_hat <= hi <= 1")

    @classmethod
    def from_counts(cls, failures: int, trials: int) -> "McEstimate":
        lo, hi = wilson_interval(failures, trials)
        q = failures / trials
        return cls(trials=trials, failures=failures, q_hat=q, ci95_lo=min(lo, q), ci95_hi=max(hi, q))

    @property
    def std_error(self) -> float:
        return math.sqrt(max(self.q_hat * (1.0 - self.q_hat), 1.0 / self.trials) / self.trials)


@dataclass(frozen=True)
class McParams:
    """Inputs of one failure-probability estimate."""

    cell: CellConfig
    K: int
    p_loc: float
    layout: ClusterLayout | None = None
    selector: str = "greedy-exact"
    channel_mode: str = "redraw"
    frozen_gains: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.K < 1:
            raise ConfigError(f"need at least one user, got K={self.K}")
        if not (0.0 <= self.p_loc <= 1.0):
            raise ConfigError(f"p_loc must lie in [0, 1], got {self.p_loc}")
        if self.channel_mode not in CHANNEL_MODES:
            raise ConfigError(
                f"unknown channel mode {self.channel_mode!r}, expected one of {CHANNEL_MODES}"
            )
        if self.selector not in relay.SELECTORS:
            raise ConfigError(
                f"unknown selector {self.selector!r}, expected one of {relay.SELECTORS}"
            )
        if self.layout is not None and self.layout.num_users != self.K:
            raise ConfigError(
                f"layout covers {self.layout.num_users} users but K={self.K}"
            )
        if self.frozen_gains is not None:
            g = np.asarray(self.frozen_gains, dtype=float)
            if np.any(g < 0.0):
                raise ConfigError("frozen gains must be nonnegative")
            object.__setattr__(self, "frozen_gains", g)


def _batch_sizes(trials: int, batch_size: int) -> list[int]:
    full, rest = divmod(trials, batch_size)
    return [batch_size] * full + ([rest] if rest else [])


def _decode_failures(y: np.ndarray, gen: np.random.Generator) -> int:
    fails = int((y < 0.0).sum())
    ties = int((y == 0.0).sum())
    if ties:
        fails += int(gen.integers(0, 2, size=ties).sum())
    return fails


def _ideal_batch(n: int, gen: np.random.Generator, params: McParams) -> int:
    hits = (gen.random((n, params.K)) < params.p_loc).sum(axis=1)
    margins = 2 * hits - params.K
    return _decode_failures(margins.astype(float), gen)


def _aircomp_batch(
    n: int, gen: np.random.Generator, params: McParams, frozen: np.ndarray | None
) -> int:
    cfg = params.cell
    k = params.K
    if params.channel_mode == "redraw":
        r = sample_distance(gen, cfg, (n, k))
        amps = sample_rayleigh_amplitude(gen, (n, k))
        gains = np.sqrt(path_loss(r, cfg)) * amps
    elif params.channel_mode == "frozen-geometry":
        amps = sample_rayleigh_amplitude(gen, (n, k))
        gains = np.sqrt(path_loss(frozen, cfg)) * amps  # frozen distances
    else:
        gains = frozen  # frozen gain vector, shape (k,)
    votes = np.where(gen.random((n, k)) < params.p_loc, 1.0, -1.0)
    if params.channel_mode == "frozen-channel":
        y = votes @ gains
    else:
        y = (gains * votes).sum(axis=1)
    nv = cfg.noise_var
    if nv > 0.0:
        y = y + gen.normal(0.0, math.sqrt(nv), size=n)
    return _decode_failures(y, gen)


def _cluster_batch(
    n: int, gen: np.random.Generator, params: McParams, frozen: np.ndarray | None
) -> int:
    cfg = params.cell
    layout = params.layout
    c, k_c, n_relays = layout.C, layout.K_C, layout.L
    if params.channel_mode == "redraw":
        r = sample_distance(gen, cfg, (n, c))
        amps = sample_rayleigh_amplitude(gen, (n, c, n_relays))
        gains = np.sqrt(path_loss(r, cfg))[:, :, None] * amps
    elif params.channel_mode == "frozen-geometry":
        amps = sample_rayleigh_amplitude(gen, (n, c, n_relays))
        gains = np.sqrt(path_loss(frozen, cfg))[None, :, None] * amps
    else:
        gains = np.broadcast_to(frozen, (n, c, n_relays)).copy()
    hits = (gen.random((n, c, k_c)) < params.p_loc).sum(axis=2)
    margins = (2 * hits - k_c).astype(float)
    fused = np.where(margins > 0.0, 1.0, -1.0)
    tie_rows = margins == 0.0
    n_ties = int(tie_rows.sum())
    if n_ties:
        fused[tie_rows] = gen.integers(0, 2, size=n_ties).astype(float) * 2.0 - 1.0
    chosen = relay.select_batch(gains, params.selector)
    y = (chosen * fused).sum(axis=1)
    nv = cfg.noise_var
    if nv > 0.0:
        y = y + gen.normal(0.0, math.sqrt(nv), size=n)
    return _decode_failures(y, gen)


def _prepare_frozen(scheme: str, params: McParams, master_seed: int) -> np.ndarray | None:
    """Fixed realization shared by all batches of a frozen-mode estimate."""
    mode = params.channel_mode
    if mode == "redraw" or scheme == "ideal":
        return None
    gen = substream(master_seed, SCOPE_MC_FROZEN)
    cfg = params.cell
    if scheme == "aircomp_pc":
        if mode == "frozen-geometry":
            return sample_distance(gen, cfg, params.K)
        if params.frozen_gains is not None:
            g = np.asarray(params.frozen_gains, dtype=float)
            if g.shape != (params.K,):
                raise ConfigError(f"frozen gains must have shape ({params.K},), got {g.shape}")
            return g
        r = sample_distance(gen, cfg, params.K)
        amps = sample_rayleigh_amplitude(gen, params.K)
        return np.sqrt(path_loss(r, cfg)) * amps
    layout = params.layout
    if mode == "frozen-geometry":
        return sample_distance(gen, cfg, layout.C)
    if params.frozen_gains is not None:
        g = np.asarray(params.frozen_gains, dtype=float)
        if g.shape != (layout.C, layout.L):
            raise ConfigError(
                f"frozen gains must have shape ({layout.C}, {layout.L}), got {g.shape}"
            )
        return g
    return relay.draw_relay_gains(gen, layout, cfg).gains


def estimate_failure(
    scheme: str,
    params: McParams,
    trials: int,
    master_seed: int,
    threads: int = 1,
    batch_size: int = DEFAULT_BATCH_SIZE,
) -> McEstimate:
    """Monte Carlo failure probability of one aggregation scheme.

    Per trial: draw channels and votes for a single component whose true
    sign is +1, aggregate, and count a decode of -1 as a failure.  The
    result depends only on (scheme, params, trials, master_seed, batch_size);
    ``threads`` only schedules batches.
    """
    if scheme not in SCHEMES:
        raise ConfigError(f"unknown scheme {scheme!r}, expected one of {SCHEMES}")
    if scheme == "cluster" and params.layout is None:
        raise ConfigError("cluster scheme requires a cluster layout")
    if trials < 1:
        raise ConfigError(f"trials must be >= 1, got {trials}")
    if batch_size < 1:
        raise ConfigError(f"batch size must be >= 1, got {batch_size}")
    frozen = _prepare_frozen(scheme, params, master_seed)

    def run_batch(item: tuple[int, int]) -> int:
        index, size = item
        gen = substream(master_seed, SCOPE_MC_BATCH, index)
        if scheme == "ideal":
            return _ideal_batch(size, gen, params)
        if scheme == "aircomp_pc":
            return _aircomp_batch(size, gen, params, frozen)
        return _cluster_batch(size, gen, params, frozen)

    items = list(enumerate(_batch_sizes(trials, batch_size)))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            counts = list(pool.map(run_batch, items))
    else:
        counts = [run_batch(item) for item in items]
    return McEstimate.from_counts(sum(counts), trials)


@dataclass(frozen=True)
class ExperimentRecord:
    """One sweep point: all parameters, the estimate, and analytic overlays.

    ``C``, ``K_C`` and ``L`` are 0 for schemes without clustering.  ``seed``
    is the derived master seed of this record's estimate, so the row alone
    re-runs the point.
    """

    scheme: str
    K: int
    C: int
    K_C: int
    L: int
    P_s_dBW: float
    N0_dBm: float
    alpha: float
    R_over_r0: float
    p_loc: float
    estimate: McEstimate
    chernoff: float
    nsnr: float
    K_eff: int
    seed: int

    def as_dict(self) -> dict:
        return {
            "scheme": self.scheme,
            "K": self.K,
            "C": self.C,
            "K_C": self.K_C,
            "L": self.L,
            "P_s_dBW": self.P_s_dBW,
            "N0_dBm": self.N0_dBm,
            "alpha": self.alpha,
            "R_over_r0": self.R_over_r0,
            "p_loc": self.p_loc,
            "trials": self.estimate.trials,
            "failures": self.estimate.failures,
            "q_hat": self.estimate.q_hat,
            "ci95_lo": self.estimate.ci95_lo,
            "ci95_hi": self.estimate.ci95_hi,
            "chernoff": self.chernoff,
            "nsnr": self.nsnr,
            "K_eff": self.K_eff,
            "seed": self.seed,
        }


CSV_COLUMNS = (
    "scheme",
    "K",
    "C",
    "K_C",
    "L",
    "P_s_dBW",
    "N0_dBm",
    "alpha",
    "R_over_r0",
    "p_loc",
    "trials",
    "failures",
    "q_hat",
    "ci95_lo",
    "ci95_hi",
    "chernoff",
    "nsnr",
    "K_eff",
    "seed",
)

SWEEP_AXES = ("P_s_dBW", "K", "L", "p_loc", "N0_dBm", "alpha")

_OVERLAY_DRAWS = 2048


def scheme_label(scheme: str, selector: str) -> str:
    return f"cluster-{selector}" if scheme == "cluster" else scheme


def parse_scheme_label(label: str) -> tuple[str, str | None]:
    """Split a record label back into (scheme, selector)."""
    if label in ("ideal", "aircomp_pc"):
        return label, None
    if label.startswith("cluster-"):
        selector = label[len("cluster-"):]
        if selector in relay.SELECTORS:
            return "cluster", selector
    raise ConfigError(f"unknown scheme label {label!r}")


def _mean_cluster_nsnr(params: McParams, master_seed: int) -> float:
    layout = params.layout
    gen = substream(master_seed, SCOPE_OVERLAY)
    r = sample_distance(gen, params.cell, (_OVERLAY_DRAWS, layout.C))
    amps = sample_rayleigh_amplitude(gen, (_OVERLAY_DRAWS, layout.C, layout.L))
    gains = np.sqrt(path_loss(r, params.cell))[:, :, None] * amps
    chosen = relay.select_batch(gains, params.selector)
    return float(relay.objective_batch(chosen).mean())


def _overlays(scheme: str, params: McParams, record_seed: int) -> tuple[float, float, int]:
    """(chernoff, nsnr, K_eff) computed from ensemble-mean channel statistics.

    The bound is evaluated at the mean detection SNR of the scheme's voting
    population: K * nsnr * (2p - 1)^2 for direct voting, with the fused
    in-cluster success probability replacing p for the two-hop scheme.
    """
    p = params.p_loc
    if scheme == "ideal":
        nsnr = 1.0
        voters, margin = params.K, 2.0 * p - 1.0
        k_eff = params.K
    elif scheme == "aircomp_pc":
        nsnr = analysis.nsnr_large_k(params.cell, params.K)
        voters, margin = params.K, 2.0 * p - 1.0
        k_eff = round(params.K * nsnr)
    else:
        nsnr = _mean_cluster_nsnr(params, record_seed)
        p_fused = 1.0 - analysis.ideal_vote_failure(params.layout.K_C, p)
        voters, margin = params.layout.C, 2.0 * p_fused - 1.0
        k_eff = round(params.layout.C * nsnr)
    if margin <= 0.0:
        return 1.0, nsnr, k_eff
    bound = math.exp(-voters * nsnr * margin * margin / 2.0)
    return bound, nsnr, k_eff


def _apply_axis(params: McParams, axis: str, value) -> McParams:
    if axis == "P_s_dBW":
        return replace(params, cell=params.cell.with_symbol_power_dbw(float(value)))
    if axis == "N0_dBm":
        return replace(params, cell=replace(params.cell, N0_dBm=float(value)))
    if axis == "alpha":
        return replace(params, cell=replace(params.cell, alpha=float(value)))
    if axis == "p_loc":
        return replace(params, p_loc=float(value))
    if axis == "K":
        k = int(value)
        if params.layout is None:
            return replace(params, K=k)
        if k % params.layout.K_C:
            raise ConfigError(
                f"K={k} is not a multiple of the cluster size {params.layout.K_C}"
            )
        layout = replace(params.layout, C=k // params.layout.K_C)
        return replace(params, K=k, layout=layout)
    if axis == "L":
        if params.layout is None:
            raise ConfigError("sweeping L requires a cluster layout")
        return replace(params, layout=replace(params.layout, L=int(value)))
    raise ConfigError(f"unknown sweep axis {axis!r}, expected one of {SWEEP_AXES}")


def sweep(
    schemes: list[str],
    axis: str,
    values: list,
    base: McParams,
    trials: int,
    master_seed: int,
    threads: int = 1,
    batch_size: int = DEFAULT_BATCH_SIZE,
) -> list[ExperimentRecord]:
    """One record per (scheme, axis value), each with its own derived seed.

    Scheme labels may carry a selector ("cluster-strongest"); the cluster
    scheme drops the layout axis adjustments it does not use.  Records come
    back in grid order regardless of scheduling.
    """
    if not values:
        raise ConfigError("sweep needs a nonempty value grid")
    if not schemes:
        raise ConfigError("sweep needs at least one scheme")
    records: list[ExperimentRecord] = []
    index = 0
    for label in schemes:
        scheme, selector = parse_scheme_label(label)
        for value in values:
            if scheme == "cluster":
                params = _apply_axis(base, axis, value)
                if selector is not None:
                    params = replace(params, selector=selector)
            else:
                # Direct schemes ignore the clustering; drop it first so the
                # layout-vs-K consistency check cannot misfire, and let them
                # ride along unchanged on an L grid (their curve is flat).
                params = replace(base, layout=None)
                if axis != "L":
                    params = _apply_axis(params, axis, value)
            record_seed = derive_seed(master_seed, SCOPE_RECORD, index)
            estimate = estimate_failure(
                scheme, params, trials, record_seed, threads=threads, batch_size=batch_size
            )
            chernoff, nsnr, k_eff = _overlays(scheme, params, record_seed)
            layout = params.layout
            records.append(
                ExperimentRecord(
                    scheme=scheme_label(scheme, params.selector),
                    K=params.K,
                    C=layout.C if (layout and scheme == "cluster") else 0,
                    K_C=layout.K_C if (layout and scheme == "cluster") else 0,
                    L=layout.L if (layout and scheme == "cluster") else 0,
                    P_s_dBW=params.cell.symbol_power_dbw,
                    N0_dBm=params.cell.N0_dBm,
                    alpha=params.cell.alpha,
                    R_over_r0=params.cell.ratio,
                    p_loc=params.p_loc,
                    estimate=estimate,
                    chernoff=chernoff,
                    nsnr=nsnr,
                    K_eff=k_eff,
                    seed=record_seed,
                )
            )
            index += 1
    return records
