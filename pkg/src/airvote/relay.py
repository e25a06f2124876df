"""Cluster layout, in-cluster fusion, and relay selection.

Each cluster fuses its members' votes perfectly and forwards the fused vote
through one of its relays (or stays silent).  Selection maximizes the
effective-participation objective

    (1/C) * (sum_c rho_c)^2 / (sum_c rho_c^2),

a quantity in [0, 1] that prefers many balanced gains over one dominant
relay.  Three backends are provided: strongest gain per cluster, iterative
greedy coordinate ascent (with a verbatim surrogate step or an exact
candidate scan), and exhaustive search over all (L+1)^C selections.

The ``*_batch`` functions operate on stacks of instances shaped (N, C, L);
the Monte Carlo engine uses them across trials and the trainer across
gradient components.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import CellConfig, path_loss, sample_distance, sample_rayleigh_amplitude
from .errors import CapacityError
from .voting import majority_vote

GREEDY_MODES = ("exact", "surrogate")
SELECTORS = ("strongest", "greedy-surrogate", "greedy-exact", "exhaustive")

_EXHAUSTIVE_CAP = 10**7
_SCAN_CHUNK = 1 << 20
_SMALL_CAND = 1 << 12


@dataclass(frozen=True)
class ClusterLayout:
    """Equal-size clustering: C clusters of K_C users, L relays each."""

    C: int
    K_C: int
    L: int

    def __post_init__(self) -> None:
        if self.C < 1 or self.K_C < 1:
            raise ValueError(f"need C >= 1 and K_C >= 1, got C={self.C}, K_C={self.K_C}")
        if not (1 <= self.L <= self.K_C):
            raise ValueError(f"need 1 <= L <= K_C, got L={self.L}, K_C={self.K_C}")

    @property
    def num_users(self) -> int:
        return self.C * self.K_C


@dataclass(frozen=True)
class RelayGains:
    """Per-cluster relay gain sets for one realization.

    All relays of a cluster sit at the cluster's common distance from the
    fusion center, so ``gains[c, l] = sqrt(path_loss(distances[c])) *
    amplitudes[c, l]`` by construction.
    """

    gains: np.ndarray        # (C, L)
    distances: np.ndarray    # (C,)
    amplitudes: np.ndarray   # (C, L)

    def __post_init__(self) -> None:
        g = np.asarray(self.gains, dtype=float)
        d = np.asarray(self.distances, dtype=float)
        a = np.asarray(self.amplitudes, dtype=float)
        if g.ndim != 2 or g.shape != a.shape or d.shape != (g.shape[0],):
            raise ValueError("gains (C, L), amplitudes (C, L), distances (C,) must align")
        if np.any(g < 0.0) or np.any(a < 0.0):
            raise ValueError("gains and amplitudes must be nonnegative")
        for arr in (g, d, a):
            arr.setflags(write=False)
        object.__setattr__(self, "gains", g)
        object.__setattr__(self, "distances", d)
        object.__setattr__(self, "amplitudes", a)

    @property
    def C(self) -> int:
        return self.gains.shape[0]

    @property
    def L(self) -> int:
        return self.gains.shape[1]


@dataclass(frozen=True)
class RelaySelection:
    """One chosen gain per cluster (0 = silent) plus the objective value."""

    chosen: np.ndarray
    objective: float
    sweeps: int = 0
    trace: tuple = ()

    def __post_init__(self) -> None:
        c = np.asarray(self.chosen, dtype=float)
        c.setflags(write=False)
        object.__setattr__(self, "chosen", c)


def draw_relay_gains(rng: np.random.Generator, layout: ClusterLayout, cfg: CellConfig) -> RelayGains:
    """One distance per cluster, independent Rayleigh amplitudes per relay.

    Draw order (distances first, then amplitudes) matches
    :func:`airvote.channel.draw_user_channels`, so with L = 1 and K_C = 1
    the gains coincide with per-user channel draws for the same generator.
    """
    distances = sample_distance(rng, cfg, layout.C)
    amplitudes = sample_rayleigh_amplitude(rng, (layout.C, layout.L))
    gains = np.sqrt(path_loss(distances, cfg))[:, None] * amplitudes
    return RelayGains(gains=gains, distances=distances, amplitudes=amplitudes)


def fuse_cluster(votes, rng: np.random.Generator | None = None) -> int:
    """Perfect in-cluster majority vote (no channel impairment)."""
    return majority_vote(votes, rng)


def selection_objective(chosen) -> float:
    """Effective-participation objective of a selection; 0 when all silent."""
    s = np.asarray(chosen, dtype=float)
    if s.ndim != 1 or s.size == 0:
        raise ValueError("selection must be a nonempty vector")
    den = float(s @ s)
    if den <= 0.0:
        return 0.0
    return float(s.sum()) ** 2 / (s.size * den)


def _as_gain_stack(gains) -> np.ndarray:
    if isinstance(gains, RelayGains):
        g = gains.gains
    else:
        g = np.asarray(gains, dtype=float)
    if g.ndim == 2:
        g = g[None, :, :]
    if g.ndim != 3:
        raise ValueError("expected relay gains shaped (C, L) or (N, C, L)")
    if np.any(g < 0.0):
        raise ValueError("relay gains must be nonnegative")
    return g


def objective_batch(chosen: np.ndarray) -> np.ndarray:
    """Objective per row of a (N, C) selection stack."""
    num_clusters = chosen.shape[1]
    den = (chosen * chosen).sum(axis=1)
    num = chosen.sum(axis=1) ** 2
    out = np.zeros(chosen.shape[0])
    nz = den > 0.0
    out[nz] = num[nz] / (num_clusters * den[nz])
    return out


def strongest_batch(gains: np.ndarray) -> np.ndarray:
    """Strongest-gain selection for every instance of a (N, C, L) stack."""
    return gains.max(axis=2)


def greedy_batch(
    gains: np.ndarray,
    mode: str = "exact",
    max_sweeps: int | None = None,
    trace: list | None = None,
) -> tuple[np.ndarray, int]:
    """Iterative coordinate updates from the strongest-gain start.

    ``exact`` scans all L+1 candidates per coordinate and moves only on a
    strict objective improvement, which makes the objective non-decreasing
    and termination certain.  ``surrogate`` reproduces the one-variable
    update rule: minimize |1/(rho + a) - a/(a^2 + b)| over the candidates,
    treating a nonpositive denominator as infinite distance (so the silent
    candidate is never picked while any positive gain exists).

    ``trace`` (single-instance stacks only) collects the objective after
    every coordinate update.  Returns (chosen, sweeps); raises
    :class:`CapacityError` when the sweep cap is hit before a full pass
    leaves the selection unchanged.
    """
    if mode not in GREEDY_MODES:
        raise ValueError(f"unknown greedy mode {mode!r}, expected one of {GREEDY_MODES}")
    n, num_clusters, num_relays = gains.shape
    if trace is not None and n != 1:
        raise ValueError("objective tracing supports single-instance stacks only")
    if max_sweeps is None:
        max_sweeps = 4 * num_clusters * (num_relays + 1) + 8
    if max_sweeps < 1:
        raise CapacityError("greedy selection needs at least one sweep")
    # Candidate order (relay 1..L, then silent) fixes deterministic
    # tie-breaks toward lower relay indices and against silence.
    cand = np.concatenate([gains, np.zeros((n, num_clusters, 1))], axis=2)
    chosen = gains.max(axis=2)
    if trace is not None:
        trace.append(selection_objective(chosen[0]))
    rows = np.arange(n)
    for sweep in range(1, max_sweeps + 1):
        changed = False
        for c in range(num_clusters):
            # a, b recomputed from the full selection every time: identical
            # state must yield identical comparisons or sweeps may not halt.
            cur = chosen[:, c]
            a = chosen.sum(axis=1) - cur
            b = (chosen * chosen).sum(axis=1) - cur * cur
            cc = cand[:, c, :]
            if mode == "exact":
                num = (a[:, None] + cc) ** 2
                den = b[:, None] + cc * cc
                val = np.divide(num, den, out=np.zeros_like(num), where=den > 0.0)
                cur_num = (a + cur) ** 2
                cur_den = b + cur * cur
                cur_val = np.divide(
                    cur_num, cur_den, out=np.zeros_like(cur_num), where=cur_den > 0.0
                )
                best = np.argmax(val, axis=1)
                moves = val[rows, best] > cur_val
            else:
                denom_t = a * a + b
                target = np.divide(a, denom_t, out=np.zeros_like(a), where=denom_t > 0.0)
                shifted = cc + a[:, None]
                inv = np.divide(
                    1.0, shifted, out=np.full_like(shifted, np.inf), where=shifted > 0.0
                )
                dist = np.where(np.isinf(inv), np.inf, np.abs(inv - target[:, None]))
                best = np.argmin(dist, axis=1)
                moves = cc[rows, best] != cur
            if moves.any():
                chosen[moves, c] = cc[rows, best][moves]
                changed = True
            if trace is not None:
                trace.append(selection_objective(chosen[0]))
        if not changed:
            return chosen, sweep
    raise CapacityError(f"greedy selection did not settle within {max_sweeps} sweeps")


def _scan_digits(idx: np.ndarray, vals: np.ndarray, base: int, num_clusters: int):
    """Sums, square sums, and active counts of the selections coded by idx."""
    sums = np.zeros(idx.size)
    sums_sq = np.zeros(idx.size)
    active = np.zeros(idx.size, dtype=np.int64)
    for c in range(num_clusters):
        digit = (idx // base ** (num_clusters - 1 - c)) % base
        v = vals[c][digit]
        sums += v
        sums_sq += v * v
        active += v > 0.0
    return sums, sums_sq, active


def _exhaustive_single(gains_cl: np.ndarray) -> np.ndarray:
    # gains_cl: (C, L).  Candidates are enumerated per cluster in descending
    # gain order with silence last, so keeping the first hit implements the
    # tie rule: higher objective, then more active relays, then the
    # lexicographically largest chosen-gain tuple.
    num_clusters, num_relays = gains_cl.shape
    base = num_relays + 1
    n_cand = base ** num_clusters
    ordered = np.sort(gains_cl, axis=1)[:, ::-1]
    vals = np.concatenate([ordered, np.zeros((num_clusters, 1))], axis=1)
    best_key = (-1.0, -1, 0)
    best_idx = 0
    for start in range(0, n_cand, _SCAN_CHUNK):
        idx = np.arange(start, min(start + _SCAN_CHUNK, n_cand), dtype=np.int64)
        sums, sums_sq, active = _scan_digits(idx, vals, base, num_clusters)
        obj = np.divide(
            sums * sums, num_clusters * sums_sq, out=np.zeros_like(sums), where=sums_sq > 0.0
        )
        top = obj.max()
        mask = obj == top
        top_active = active[mask].max()
        mask &= active == top_active
        local = int(np.flatnonzero(mask)[0])
        key = (float(top), int(top_active), -int(idx[local]))
        if key > best_key:
            best_key = key
            best_idx = int(idx[local])
    digits = [(best_idx // base ** (num_clusters - 1 - c)) % base for c in range(num_clusters)]
    return vals[np.arange(num_clusters), digits]


def exhaustive_batch(gains: np.ndarray, capacity: int = _EXHAUSTIVE_CAP) -> np.ndarray:
    """Globally optimal selection per instance of a (N, C, L) stack.

    Small candidate spaces are vectorized across instances; larger ones fall
    back to a per-instance chunked scan.  The candidate count is capped.
    """
    n, num_clusters, num_relays = gains.shape
    base = num_relays + 1
    n_cand = base ** num_clusters
    if n_cand > capacity:
        raise CapacityError(
            f"exhaustive search needs {n_cand} candidates, above the cap of {capacity}"
        )
    if n_cand > _SMALL_CAND or n == 1:
        out = np.empty((n, num_clusters))
        for i in range(n):
            out[i] = _exhaustive_single(gains[i])
        return out
    # Vectorized regime: digits table (n_cand, C), instances in chunks.
    idx = np.arange(n_cand, dtype=np.int64)
    digits = np.empty((n_cand, num_clusters), dtype=np.int64)
    for c in range(num_clusters):
        digits[:, c] = (idx // base ** (num_clusters - 1 - c)) % base
    ordered = np.sort(gains, axis=2)[:, :, ::-1]
    vals = np.concatenate([ordered, np.zeros((n, num_clusters, 1))], axis=2)
    out = np.empty((n, num_clusters))
    chunk = max(1, (1 << 23) // (n_cand * num_clusters))
    cluster_cols = np.arange(num_clusters)[None, :]
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        block = vals[start:stop]                      # (m, C, L+1)
        picked = block[:, cluster_cols, digits]       # (m, n_cand, C)
        sums = picked.sum(axis=2)
        sums_sq = (picked * picked).sum(axis=2)
        obj = np.divide(
            sums * sums,
            num_clusters * sums_sq,
            out=np.zeros_like(sums),
            where=sums_sq > 0.0,
        )
        active = (picked > 0.0).sum(axis=2)
        top = obj.max(axis=1, keepdims=True)
        tie = obj == top
        active_masked = np.where(tie, active, -1)
        top_active = active_masked.max(axis=1, keepdims=True)
        final = tie & (active_masked == top_active)
        first = final.argmax(axis=1)
        out[start:stop] = picked[np.arange(stop - start), first, :]
    return out


def select_strongest(gains) -> RelaySelection:
    """Pick the strongest relay of every cluster."""
    g = _as_gain_stack(gains)
    chosen = strongest_batch(g)[0]
    return RelaySelection(chosen=chosen, objective=selection_objective(chosen))


def select_greedy(
    gains,
    mode: str = "exact",
    max_sweeps: int | None = None,
    record_trace: bool = False,
) -> RelaySelection:
    """Iterative greedy selection; see :func:`greedy_batch`."""
    g = _as_gain_stack(gains)
    trace: list[float] | None = [] if record_trace else None
    chosen, sweeps = greedy_batch(g, mode=mode, max_sweeps=max_sweeps, trace=trace)
    sel = chosen[0]
    return RelaySelection(
        chosen=sel,
        objective=selection_objective(sel),
        sweeps=sweeps,
        trace=tuple(trace) if trace else (),
    )


def select_exhaustive(gains, capacity: int = _EXHAUSTIVE_CAP) -> RelaySelection:
    """Exact solution of the selection problem; capacity-guarded."""
    g = _as_gain_stack(gains)
    chosen = exhaustive_batch(g, capacity=capacity)[0]
    return RelaySelection(chosen=chosen, objective=selection_objective(chosen))


def select(gains, selector: str, max_sweeps: int | None = None) -> RelaySelection:
    """Dispatch by selector name: one of ``SELECTORS``."""
    if selector == "strongest":
        return select_strongest(gains)
    if selector == "greedy-exact":
        return select_greedy(gains, mode="exact", max_sweeps=max_sweeps)
    if selector == "greedy-surrogate":
        return select_greedy(gains, mode="surrogate", max_sweeps=max_sweeps)
    if selector == "exhaustive":
        return select_exhaustive(gains)
    raise ValueError(f"unknown selector {selector!r}, expected one of {SELECTORS}")


def select_batch(gains: np.ndarray, selector: str) -> np.ndarray:
    """Batch dispatch over a (N, C, L) stack; returns (N, C) chosen gains."""
    if selector == "strongest":
        return strongest_batch(gains)
    if selector == "greedy-exact":
        return greedy_batch(gains, mode="exact")[0]
    if selector == "greedy-surrogate":
        return greedy_batch(gains, mode="surrogate")[0]
    if selector == "exhaustive":
        return exhaustive_batch(gains)
    raise ValueError(f"unknown selector {selector!r}, expected one of {SELECTORS}")
