"""Over-the-air aggregation of one-bit votes.

After transmit-side phase correction every user's symbol arrives with a
nonnegative real amplitude, so the receiver sees the weighted vote sum plus
real Gaussian noise and decodes its sign.  The model lives entirely on the
real baseband axis: the orthogonal axis carries only noise and cannot move
the sign detector.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .voting import majority_vote, sign, sign_vector


def aggregate_aircomp_pc(
    votes,
    gains,
    noise_var: float,
    rng: np.random.Generator | None = None,
) -> int:
    """Decode one component: sign(sum_k gains[k] * votes[k] + noise).

    With ``noise_var == 0`` no noise variate is consumed, so the call is
    stream-identical to an ideal majority vote when the gains are equal.
    """
    v = np.asarray(votes)
    g = np.asarray(gains, dtype=float)
    if v.shape != g.shape or v.ndim != 1:
        raise ValueError(f"votes and gains must match, got {v.shape} vs {g.shape}")
    if noise_var < 0.0:
        raise ValueError(f"noise variance must be >= 0, got {noise_var}")
    y = float(g @ v)
    if noise_var > 0.0:
        if rng is None:
            raise ValueError("noisy aggregation requires an RNG")
        y += rng.normal(0.0, math.sqrt(noise_var))
    return sign(y, rng)


def aggregate_ideal(votes, rng: np.random.Generator | None = None) -> int:
    """Error-free aggregation: the plain majority vote."""
    return majority_vote(votes, rng)


def aggregate_aircomp_pc_components(
    votes,
    gains,
    noise_var: float,
    streams: Sequence[np.random.Generator],
) -> np.ndarray:
    """Aggregate ``d`` components at once.

    ``votes`` is (num_users, d); ``gains`` is (num_users, d) or (num_users,)
    broadcast over components.  Component ``i`` consumes randomness only from
    ``streams[i]``, so the result is bitwise equal to ``d`` scalar calls of
    :func:`aggregate_aircomp_pc` with the corresponding substreams.
    """
    v = np.asarray(votes)
    g = np.asarray(gains, dtype=float)
    if g.ndim == 1:
        g = g[:, None]
    if v.ndim != 2 or g.shape[0] != v.shape[0]:
        raise ValueError(f"votes {v.shape} and gains {g.shape} do not align")
    if noise_var < 0.0:
        raise ValueError(f"noise variance must be >= 0, got {noise_var}")
    d = v.shape[1]
    if len(streams) != d:
        raise ValueError(f"need one stream per component, got {len(streams)} for d={d}")
    y = (g * v).sum(axis=0)
    sigma = math.sqrt(noise_var)
    out = np.empty(d, dtype=np.int8)
    for i in range(d):
        yi = float(y[i])
        if noise_var > 0.0:
            yi += streams[i].normal(0.0, sigma)
        out[i] = sign(yi, streams[i])
    return out


def aggregate_ideal_components(votes, streams: Sequence[np.random.Generator]) -> np.ndarray:
    """Per-component majority vote over a (num_users, d) vote matrix."""
    v = np.asarray(votes)
    if v.ndim != 2:
        raise ValueError("expected a (num_users, d) vote matrix")
    d = v.shape[1]
    if len(streams) != d:
        raise ValueError(f"need one stream per component, got {len(streams)} for d={d}")
    sums = v.sum(axis=0)
    out = np.empty(d, dtype=np.int8)
    for i in range(d):
        out[i] = sign(int(sums[i]), streams[i])
    return out


def aggregate_aircomp_pc_matrix(
    votes,
    gains,
    noise_var: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Vectorized aggregation of ``d`` components from a single stream.

    Same model as :func:`aggregate_aircomp_pc_components` but all noise
    variates come from ``rng`` in one draw (tie coins afterwards, only for
    the zeros that occur).  Statistically identical, not stream-compatible
    with the per-component form; preferred in hot loops.
    """
    v = np.asarray(votes)
    g = np.asarray(gains, dtype=float)
    if g.ndim == 1:
        g = g[:, None]
    if v.ndim != 2 or g.shape[0] != v.shape[0]:
        raise ValueError(f"votes {v.shape} and gains {g.shape} do not align")
    if noise_var < 0.0:
        raise ValueError(f"noise variance must be >= 0, got {noise_var}")
    y = (g * v).sum(axis=0)
    if noise_var > 0.0:
        y = y + rng.normal(0.0, math.sqrt(noise_var), size=v.shape[1])
    return sign_vector(y, rng)
