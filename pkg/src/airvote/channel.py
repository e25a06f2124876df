"""Cell geometry, path loss, and Rayleigh fading.

Users are dropped uniformly in a disc of radius ``R_m`` around the fusion
center.  The effective channel amplitude of a user after transmit-side phase
correction is ``rho = sqrt(path_loss(r)) * |h|`` with ``|h|`` a unit-power
Rayleigh amplitude, and the additive noise seen by the sign detector has
variance ``N0 / (2 * P_s)`` on the real baseband axis.

All arithmetic is done in linear units (watts, amplitudes); dB values are
converted exactly once when a :class:`CellConfig` is built.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np


def _dbw_to_watt(dbw: float) -> float:
    return 10.0 ** (dbw / 10.0)


def _dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class CellConfig:
    """Cell geometry and per-symbol power budget.

    ``P_dBW`` is the power budget of one OFDM symbol; it is shared evenly by
    ``M`` subchannels, so the per-symbol power is ``P / M``.  Key names carry
    their unit suffixes on purpose: they match the experiment config file.
    """

    R_m: float = 1000.0
    r0_m: float = 10.0
    alpha: float = 3.0
    P_dBW: float = -20.0
    M: int = 1000
    N0_dBm: float = -80.0

    def __post_init__(self) -> None:
        if not (self.R_m > self.r0_m > 0.0):
            raise ValueError(
                f"need R_m > r0_m > 0, got R_m={self.R_m}, r0_m={self.r0_m}"
            )
        if self.M < 1:
            raise ValueError(f"subchannel count M must be >= 1, got {self.M}")

    @property
    def ratio(self) -> float:
        """Cell radius over reference distance, R / r0."""
        return self.R_m / self.r0_m

    @property
    def alpha_flagged(self) -> bool:
        """True when alpha falls outside the typical (2, 4) range.

        Such values are accepted (the closed-form channel moments still have
        well-defined limits) but downstream tools surface a warning.
        """
        return not (2.0 < self.alpha < 4.0)

    @property
    def symbol_power_w(self) -> float:
        """Per-symbol transmit power P_s = P / M in watts."""
        return _dbw_to_watt(self.P_dBW) / self.M

    @property
    def symbol_power_dbw(self) -> float:
        return 10.0 * math.log10(self.symbol_power_w)

    @property
    def noise_power_w(self) -> float:
        return _dbm_to_watt(self.N0_dBm)

    @property
    def noise_var(self) -> float:
        """Real-baseband noise variance N0 / (2 P_s), dimensionless."""
        return self.noise_power_w / (2.0 * self.symbol_power_w)

    def with_symbol_power_dbw(self, ps_dbw: float) -> "CellConfig":
        """Copy with the total budget adjusted so that P_s equals ``ps_dbw``."""
        return replace(self, P_dBW=ps_dbw + 10.0 * math.log10(self.M))


@dataclass(frozen=True)
class ChannelDraw:
    """One realization of per-user effective channel gains.

    ``gains[k]`` is the nonnegative amplitude sqrt(path_loss(r_k)) * |h_k|;
    phase correction removes the phase and never the amplitude.
    """

    gains: np.ndarray
    distances: np.ndarray
    noise_var: float

    def __post_init__(self) -> None:
        gains = np.asarray(self.gains, dtype=float)
        distances = np.asarray(self.distances, dtype=float)
        if gains.ndim != 1 or gains.shape != distances.shape:
            raise ValueError("gains and distances must be 1-d and equally long")
        if gains.size == 0:
            raise ValueError("a channel draw needs at least one user")
        if np.any(gains < 0.0):
            raise ValueError("channel gains must be nonnegative")
        if self.noise_var < 0.0:
            raise ValueError(f"noise variance must be >= 0, got {self.noise_var}")
        gains.setflags(write=False)
        distances.setflags(write=False)
        object.__setattr__(self, "gains", gains)
        object.__setattr__(self, "distances", distances)

    @property
    def num_users(self) -> int:
        return self.gains.size


def path_loss(r, cfg: CellConfig):
    """Large-scale power gain at distance ``r`` (meters).

    Equals 1 inside the reference distance and (r / r0)^(-alpha) beyond it;
    continuous and non-increasing.  Accepts scalars or arrays.
    """
    arr = np.asarray(r, dtype=float)
    if np.any(arr < 0.0):
        raise ValueError("distance must be nonnegative")
    out = np.where(arr <= cfg.r0_m, 1.0, (np.maximum(arr, cfg.r0_m) / cfg.r0_m) ** (-cfg.alpha))
    if out.ndim == 0:
        return float(out)
    return out


def sample_distance(rng: np.random.Generator, cfg: CellConfig, size=None):
    """Distance of a uniformly placed user: inverse CDF of f(r) = 2r / R^2."""
    u = rng.random(size)
    return cfg.R_m * np.sqrt(u)


def sample_rayleigh_amplitude(rng: np.random.Generator, size=None):
    """|h| for h ~ CN(0, 1): Rayleigh with scale 1/sqrt(2), so E[|h|^2] = 1."""
    return rng.rayleigh(scale=math.sqrt(0.5), size=size)


def draw_user_channels(rng: np.random.Generator, num_users: int, cfg: CellConfig) -> ChannelDraw:
    """Draw one i.i.d. realization of all user channels.

    Draw order is fixed (distances first, then fading amplitudes) so a given
    generator state always yields the same draw.
    """
    if num_users < 1:
        raise ValueError(f"need at least one user, got {num_users}")
    distances = sample_distance(rng, cfg, num_users)
    amplitudes = sample_rayleigh_amplitude(rng, num_users)
    gains = np.sqrt(path_loss(distances, cfg)) * amplitudes
    return ChannelDraw(gains=gains, distances=distances, noise_var=cfg.noise_var)
