"""Asynchronous event structure: objective sampling, computations and delayed deliveries.

All generators are pure functions of ``(seed, parameters)``. Sampling and
schedule draws use separate random streams derived from the same seed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ConfigError
from .qp_model import SampleState

_SAMPLING_STREAM = 1
_SCHEDULE_STREAM = 2


def _rng(seed: int | None, stream: int) -> np.random.Generator:
    if seed is None:
        return np.random.default_rng()
    return np.random.default_rng([int(seed), stream])


def _per_agent(value, n_agents: int, name: str) -> np.ndarray:
    arr = np.broadcast_to(np.asarray(value, dtype=float), (n_agents,)).copy()
    if np.any(arr < 0) or np.any(arr > 1):
        raise ConfigError(f"{name} must lie in [0, 1], got {value}")
    return arr


@dataclass(frozen=True, eq=False)
class SamplingPlan:
    """Per-agent sample sets, stored as integer grid indices (time = index * t_s)."""

    t_s: float
    horizon: float
    grid_sets: tuple[np.ndarray, ...]

    def __post_init__(self):
        if not self.t_s > 0:
            raise ConfigError("sampling period t_s must be positive")
        sets = []
        for s in self.grid_sets:
            s = np.unique(np.asarray(s, dtype=np.int64))
            if s.size == 0 or s[0] != 0:
                raise ConfigError("every agent must sample at t = 0")
            sets.append(s)
        object.__setattr__(self, "grid_sets", tuple(sets))

    @classmethod
    def from_times(cls, t_s: float, sets: Sequence[Sequence[float]], horizon: float | None = None) -> "SamplingPlan":
        idx = []
        for s in sets:
            a = np.asarray(s, dtype=float) / t_s
            if np.any(np.abs(a - np.round(a)) > 1e-9) or np.any(a < -1e-9):
                raise ConfigError("sample times must be nonnegative multiples of t_s")
            idx.append(np.round(a).astype(np.int64))
        if horizon is None:
            horizon = t_s * max(int(i.max()) for i in idx)
        return cls(float(t_s), float(horizon), tuple(idx))

    @property
    def N(self) -> int:
        return len(self.grid_sets)

    @cached_property
    def union_index(self) -> np.ndarray:
        return np.unique(np.concatenate(self.grid_sets))

    @property
    def union_times(self) -> np.ndarray:
        return self.union_index * self.t_s

    @property
    def T(self) -> int:
        """Index of the last sample event (events are z = 0..T)."""
        return self.union_index.size - 1

    @cached_property
    def theta_index(self) -> np.ndarray:
        """theta_index[z, i]: grid index of agent i's freshest sample at event z."""
        cols = [s[np.searchsorted(s, self.union_index, side="right") - 1] for s in self.grid_sets]
        return np.stack(cols, axis=1)

    @property
    def theta(self) -> np.ndarray:
        return self.theta_index * self.t_s

    @cached_property
    def delta(self) -> float:
        """Largest jump of any agent's sample time between consecutive events."""
        if self.T == 0:
            return 0.0
        return float(np.max(np.abs(np.diff(self.theta_index, axis=0)))) * self.t_s

    def sample_state(self, z: int) -> SampleState:
        return SampleState(self.theta[z], float(self.union_times[z]))

    def is_synchronous(self) -> bool:
        first = self.grid_sets[0]
        return all(np.array_equal(first, s) for s in self.grid_sets[1:])


def generate_sampling(seed: int | None, n_agents: int, t_s: float, horizon: float, p_sample=1.0) -> SamplingPlan:
    """Each agent keeps each grid time independently with probability p_sample (t = 0 always)."""
    if not t_s > 0:
        raise ConfigError("sampling period t_s must be positive")
    if horizon < t_s:
        raise ConfigError(f"horizon {horizon} shorter than one sampling period {t_s}")
    p = _per_agent(p_sample, n_agents, "p_sample")
    if np.any(p <= 0):
        raise ConfigError("p_sample must be in (0, 1]")
    n_grid = int(np.floor(horizon / t_s + 1e-9)) + 1
    rng = _rng(seed, _SAMPLING_STREAM)
    keep = rng.random((n_agents, n_grid)) < p[:, None]
    keep[:, 0] = True
    return SamplingPlan(float(t_s), float(horizon), tuple(np.flatnonzero(row) for row in keep))


@dataclass(frozen=True, eq=False)
class AsyncSchedule:
    """Computation and delivery events for every iteration k.

    ``stamps[k, i, j]`` is the iteration whose block-j value agent i receives at
    iteration k, or -1 when nothing is delivered. Deliveries are applied before
    computations within an iteration.
    """

    B: int
    kappa: np.ndarray
    compute: np.ndarray
    stamps: np.ndarray
    mask: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        if self.B < 1:
            raise ConfigError("delay bound B must be >= 1")
        kappa = np.asarray(self.kappa, dtype=np.int64)
        if kappa.ndim != 1 or kappa.size == 0 or np.any(kappa < 1):
            raise ConfigError("kappa must be a nonempty list of positive iteration counts")
        object.__setattr__(self, "kappa", kappa)
        K, N = self.compute.shape
        if K != int(kappa.sum()) or self.stamps.shape != (K, N, N):
            raise ConfigError("event arrays do not match the iteration budget")

    @property
    def N(self) -> int:
        return self.compute.shape[1]

    @cached_property
    def eta(self) -> np.ndarray:
        """eta[z]: total iterations through interval z (eta[-1] is the run length)."""
        return np.cumsum(self.kappa)

    @property
    def K(self) -> int:
        return int(self.eta[-1])

    def start(self, z: int) -> int:
        """First iteration of interval z (eta_{z-1}, with eta_{-1} = 0)."""
        return 0 if z == 0 else int(self.eta[z - 1])

    @cached_property
    def interval_of_iteration(self) -> np.ndarray:
        return np.repeat(np.arange(self.kappa.size), self.kappa)

    def held_stamps(self) -> np.ndarray:
        """held[k, i, j]: stamp of agent i's copy of block j used at iteration k."""
        K, N = self.compute.shape
        held = np.zeros((K, N, N), dtype=np.int64)
        cur = np.zeros((N, N), dtype=np.int64)
        for k in range(K):
            d = self.stamps[k]
            cur = np.where(d >= 0, np.maximum(cur, d), cur)
            np.fill_diagonal(cur, k)
            held[k] = cur
        return held


def expand_kappa(kappa, n_intervals: int | None) -> np.ndarray:
    k = np.atleast_1d(np.asarray(kappa, dtype=np.int64))
    if k.size == 1:
        if n_intervals is None:
            raise ConfigError("a scalar kappa needs the number of sample events")
        k = np.full(n_intervals, int(k[0]), dtype=np.int64)
    elif n_intervals is not None and k.size != n_intervals:
        raise ConfigError(f"kappa lists {k.size} intervals but there are {n_intervals} sample events")
    if np.any(k < 1):
        raise ConfigError("kappa must be >= 1")
    return k


def generate_schedule(
    seed: int | None,
    n_agents: int,
    B: int,
    kappa,
    p_update=1.0,
    p_comm=1.0,
    n_intervals: int | None = None,
    mask: np.ndarray | None = None,
) -> AsyncSchedule:
    """Random computation/broadcast events, thinned then forced to respect the delay bound.

    An agent that has not computed for B - 1 iterations computes at the next one.
    A copy that would otherwise become older than B - 1 iterations is refreshed by a
    forced delivery. Delivery stamps are uniform over the admissible window and never
    older than the copy already held.
    """
    B = int(B)
    if B < 1:
        raise ConfigError("delay bound B must be >= 1")
    kap = expand_kappa(kappa, n_intervals)
    pu = _per_agent(p_update, n_agents, "p_update")
    pc = _per_agent(p_comm, n_agents, "p_comm")
    if mask is None:
        mask = np.ones((n_agents, n_agents), dtype=bool)
    mask = np.asarray(mask, dtype=bool).copy()
    np.fill_diagonal(mask, False)
    K = int(kap.sum())
    rng = _rng(seed, _SCHEDULE_STREAM)

    compute = np.zeros((K, n_agents), dtype=bool)
    stamps = np.full((K, n_agents, n_agents), -1, dtype=np.int64)
    last_compute = np.full(n_agents, -1, dtype=np.int64)
    held = np.zeros((n_agents, n_agents), dtype=np.int64)
    for k in range(K):
        u_comp = rng.random(n_agents)
        u_comm = rng.random(n_agents)
        u_tau = rng.random((n_agents, n_agents))

        comp = (u_comp < pu) | (k - last_compute >= B)
        last_compute[comp] = k
        compute[k] = comp

        floor_k = max(0, k - B + 1)
        broadcast = (u_comm < pc)[None, :] & mask
        forced = (held < floor_k) & mask
        deliver = broadcast | forced
        lo = np.maximum(held, floor_k)
        tau = lo + np.floor(u_tau * (k - lo + 1)).astype(np.int64)
        stamps[k] = np.where(deliver, tau, -1)
        held = np.where(deliver, tau, held)

    np.fill_diagonal(mask, True)
    return AsyncSchedule(B, kap, compute, stamps, mask, seed)


def synchronous_schedule(n_agents: int, kappa, n_intervals: int | None = None) -> AsyncSchedule:
    """B = 1: every agent computes every iteration with fresh copies of every block."""
    kap = expand_kappa(kappa, n_intervals)
    K = int(kap.sum())
    compute = np.ones((K, n_agents), dtype=bool)
    stamps = np.broadcast_to(np.arange(K)[:, None, None], (K, n_agents, n_agents)).copy()
    idx = np.arange(n_agents)
    stamps[:, idx, idx] = -1
    return AsyncSchedule(1, kap, compute, stamps, np.ones((n_agents, n_agents), dtype=bool), None)


class Violation(NamedTuple):
    condition: str
    agents: tuple[int, ...]
    k: int


def _run_starts(bad: np.ndarray) -> np.ndarray:
    """Indices where a run of True values begins."""
    if bad.size == 0:
        return np.array([], dtype=np.int64)
    prev = np.concatenate([[False], bad[:-1]])
    return np.flatnonzero(bad & ~prev)


def validate_schedule(s: AsyncSchedule) -> list[Violation]:
    """Check both parts of the bounded-delay assumption.

    One violation is reported per maximal run of consecutive failures:
    ``compute_window`` (no computation in {k, ..., k+B-1}), ``delivery_stamp``
    (a delivered stamp outside [max(0, k-B+1), k]) and ``stale_copy`` (a copy
    older than B - 1 at iteration k, with bad stamps clamped so they count once).
    """
    B, K, N = s.B, s.K, s.N
    out: list[Violation] = []

    if K >= B:
        c = np.concatenate([np.zeros((1, N), dtype=np.int64), np.cumsum(s.compute, axis=0)])
        window_counts = c[B:] - c[:-B]
        for i in range(N):
            for k in _run_starts(window_counts[:, i] == 0):
                out.append(Violation("compute_window", (i,), int(k)))

    ks = np.arange(K)
    floor = np.maximum(0, ks - B + 1)
    for i in range(N):
        for j in range(N):
            if i == j or not s.mask[i, j]:
                continue
            d = s.stamps[:, i, j]
            has = d >= 0
            bad = has & ((d < floor) | (d > ks))
            for k in np.flatnonzero(bad):
                out.append(Violation("delivery_stamp", (i, j), int(k)))
            clamped = np.where(has, np.clip(d, floor, ks), -1)
            held = np.maximum.accumulate(np.maximum(clamped, 0))
            for k in _run_starts(held < floor):
                out.append(Violation("stale_copy", (i, j), int(k)))
    out.sort(key=lambda v: (v.k, v.condition, v.agents))
    return out


def write_schedule_csv(s: AsyncSchedule, path) -> None:
    """Dump events as rows ``k, agent, event_type, counterpart, tau``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "agent", "event_type", "counterpart", "tau"])
        for k in range(s.K):
            for i in range(s.N):
                for j in np.flatnonzero(s.stamps[k, i] >= 0):
                    w.writerow([k, i, "deliver", int(j), int(s.stamps[k, i, j])])
                if s.compute[k, i]:
                    w.writerow([k, i, "compute", "", ""])
