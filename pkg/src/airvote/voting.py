"""Vote vectors and majority decisions.

A vote vector is a plain integer ndarray with entries in {+1, -1}.  By
convention the true gradient sign is +1, so a decode of -1 is a failure.
Exact zeros (empty majorities, silent channels) are resolved by a fair coin
from an explicit generator; a deterministic tie rule would bias the failure
statistics once the true sign is fixed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def sign(x: float, rng: np.random.Generator | None = None) -> int:
    """Sign in {+1, -1}; an exact zero becomes a fair coin from ``rng``."""
    if math.isnan(x):
        raise ValueError("sign of NaN is undefined")
    if x > 0:
        return 1
    if x < 0:
        return -1
    if rng is None:
        raise ValueError("sign(0) requires an RNG for the fair tie coin")
    return int(rng.integers(0, 2)) * 2 - 1


def sign_vector(x, rng: np.random.Generator | None = None) -> np.ndarray:
    """Componentwise :func:`sign` with the same tie rule, as int8."""
    arr = np.asarray(x, dtype=float)
    if np.any(np.isnan(arr)):
        raise ValueError("sign of NaN is undefined")
    out = np.where(arr > 0, 1, -1).astype(np.int8)
    zeros = np.flatnonzero(arr == 0.0)
    if zeros.size:
        if rng is None:
            raise ValueError("sign(0) requires an RNG for the fair tie coin")
        out[zeros] = rng.integers(0, 2, size=zeros.size).astype(np.int8) * 2 - 1
    return out


@dataclass(frozen=True)
class LocalSuccessModel:
    """Bernoulli model of one user's vote: +1 with probability ``p_loc``."""

    p_loc: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.p_loc <= 1.0):
            raise ValueError(f"p_loc must lie in [0, 1], got {self.p_loc}")

    def draw(self, rng: np.random.Generator, num_users: int) -> np.ndarray:
        if num_users < 1:
            raise ValueError(f"need at least one user, got {num_users}")
        hits = rng.random(num_users) < self.p_loc
        return np.where(hits, 1, -1).astype(np.int8)


def draw_votes(rng: np.random.Generator, num_users: int, model: LocalSuccessModel) -> np.ndarray:
    """i.i.d. vote vector under the given local success model."""
    return model.draw(rng, num_users)


def majority_vote(votes, rng: np.random.Generator | None = None) -> int:
    """Sign of the vote sum.  Never touches ``rng`` unless the sum is zero."""
    arr = np.asarray(votes)
    if arr.size == 0:
        raise ValueError("majority vote over an empty vote vector")
    if not np.isin(arr, (-1, 1)).all():
        raise ValueError("votes must be +1 or -1")
    return sign(int(arr.sum()), rng)
