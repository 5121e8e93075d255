"""Asynchronous projected block coordinate descent over a sequence of sample events.

Iterations are 0-indexed: interval z covers iterations ``eta[z-1], ..., eta[z] - 1``
and the state after its last iteration is ``x(eta[z])``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, NonFiniteTraceError, PreconditionError
from .qp_model import PAPER_LITERAL, AggregateObjective, TimeVaryingQP, build_aggregate
from .schedule import AsyncSchedule, SamplingPlan

TRACE_COLUMNS = ("k", "z", "t_z", "cost", "s_norm", "beta", "alpha", "err_opt")

GammaPolicy = float | str | Sequence[float] | Callable[[int, AggregateObjective], float]


@dataclass
class NetworkState:
    """True state, each agent's local view and the stamps of its copies."""

    x: np.ndarray
    views: np.ndarray
    held: np.ndarray
    k: int = 0

    @classmethod
    def initial(cls, x0: np.ndarray, n_agents: int) -> "NetworkState":
        x0 = np.asarray(x0, dtype=float)
        return cls(x0.copy(), np.tile(x0, (n_agents, 1)), np.zeros((n_agents, n_agents), dtype=np.int64))


def step(
    k: int,
    agg: AggregateObjective,
    schedule: AsyncSchedule,
    state: NetworkState,
    gamma: float,
    lo: np.ndarray,
    hi: np.ndarray,
    history: np.ndarray,
    mode: str = PAPER_LITERAL,
) -> np.ndarray:
    """Advance iteration k in place and return the update vector s(k).

    ``history[tau]`` must hold x(tau) for every tau <= k; deliveries read from it.
    """
    owner = agg.partition.owner
    cols = np.arange(owner.size)
    stamps = schedule.stamps[k]
    col_stamps = stamps[:, owner]
    got = col_stamps >= 0
    if got.any():
        rows, cs = np.nonzero(got)
        state.views[rows, cs] = history[col_stamps[rows, cs], cs]
        state.held = np.where(stamps >= 0, stamps, state.held)
    state.views[owner, cols] = state.x
    np.fill_diagonal(state.held, k)

    active = schedule.compute[k][owner]
    s = np.zeros_like(state.x)
    if active.any():
        M = agg.direction_matrix(mode)
        d = np.einsum("ij,ij->i", state.views[owner], M) + agg.r_hat
        new = np.clip(state.x[active] - gamma * d[active], lo[active], hi[active])
        s[active] = new - state.x[active]
        state.x[active] = new
    state.k = k + 1
    return s


@dataclass(eq=False)
class RunTrace:
    """Trajectory of one run with per-iteration and per-interval bookkeeping."""

    states: np.ndarray
    s_norm: np.ndarray
    interval_of_iteration: np.ndarray
    eta: np.ndarray
    t: np.ndarray
    theta: np.ndarray
    gammas: np.ndarray
    aggregates: list[AggregateObjective]
    B: int
    label: str = "async_bcd"
    alpha: np.ndarray | None = None
    err_opt: np.ndarray | None = None
    copy_ages: np.ndarray | None = None
    views: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    @property
    def K(self) -> int:
        return self.s_norm.size

    @property
    def n_intervals(self) -> int:
        return self.eta.size

    def start(self, z: int) -> int:
        return 0 if z == 0 else int(self.eta[z - 1])

    @property
    def row_interval(self) -> np.ndarray:
        """Interval attached to state row k (row 0 belongs to interval 0)."""
        return np.concatenate([[0], self.interval_of_iteration])

    @property
    def costs(self) -> np.ndarray:
        z_rows = self.row_interval
        out = np.empty(self.K + 1)
        for z, agg in enumerate(self.aggregates):
            sel = z_rows == z
            out[sel] = agg.costs(self.states[sel])
        return out

    @property
    def beta(self) -> np.ndarray:
        """beta(k) = sum of ||s(tau)||^2 over tau = k-B..k-1."""
        sq = np.concatenate([[0.0], np.cumsum(self.s_norm**2)])
        k = np.arange(self.K + 1)
        return sq[k] - sq[np.maximum(k - self.B, 0)]

    def end_states(self) -> np.ndarray:
        return self.states[self.eta]

    def with_metrics(self, alpha: np.ndarray | None, err_opt: np.ndarray | None) -> "RunTrace":
        return replace(self, alpha=alpha, err_opt=err_opt)

    def rows(self):
        z_rows = self.row_interval
        cost = self.costs
        beta = self.beta
        s = np.concatenate([self.s_norm, [0.0]])
        for k in range(self.K + 1):
            z = int(z_rows[k])
            a = None if self.alpha is None else self.alpha[k]
            e = None if self.err_opt is None else self.err_opt[k]
            yield (k, z, float(self.t[z]), float(cost[k]), float(s[k]), float(beta[k]), a, e)


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def write_trace_csv(trace: RunTrace, path) -> None:
    rows = list(trace.rows())
    for row in rows:
        if not all(math.isfinite(v) for v in row[2:6]):
            raise NonFiniteTraceError(f"non-finite value in trace row k={row[0]}")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def read_trace_csv(path) -> dict[str, np.ndarray]:
    """Parse a trace CSV into float columns (blank cells become NaN)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = [[float(c) if c != "" else math.nan for c in row] for row in reader]
    arr = np.array(data, dtype=float).reshape(-1, len(header))
    return {name: arr[:, j] for j, name in enumerate(header)}


def write_intervals_csv(trace: RunTrace, path) -> None:
    """Per-interval rows: z, t_z, eta_z, gamma, q_hat fingerprint, theta_1..theta_N."""
    N = trace.theta.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["z", "t_z", "eta_z", "gamma", "fingerprint"] + [f"theta_{i}" for i in range(N)])
        for z, agg in enumerate(trace.aggregates):
            w.writerow(
                [z, _fmt(trace.t[z]), int(trace.eta[z]), _fmt(trace.gammas[z]), agg.fingerprint()]
                + [_fmt(v) for v in trace.theta[z]]
            )


def resolve_gammas(
    gamma: GammaPolicy,
    qp: TimeVaryingQP,
    plan: SamplingPlan,
    schedule: AsyncSchedule,
    aggregates: list[AggregateObjective],
) -> np.ndarray:
    """Turn a step-size policy into one value per interval."""
    Z = len(aggregates)
    if isinstance(gamma, str):
        if gamma != "auto":
            raise ConfigError(f"unknown gamma policy {gamma!r}; use a number or 'auto'")
        from .bounds import auto_gammas

        out = auto_gammas(qp, plan, schedule, aggregates)
    elif callable(gamma):
        out = np.array([float(gamma(z, agg)) for z, agg in enumerate(aggregates)])
    else:
        out = np.broadcast_to(np.asarray(gamma, dtype=float), (Z,)).copy() if np.ndim(gamma) == 0 else np.asarray(gamma, dtype=float)
        if out.shape != (Z,):
            raise ConfigError(f"need {Z} step sizes, got {out.size}")
    if not np.all(np.isfinite(out)) or np.any(out <= 0):
        raise ConfigError(f"step sizes must be positive and finite, got {out}")
    return out


def initial_point(qp: TimeVaryingQP, x0, seed: int | None) -> np.ndarray:
    """x0 given explicitly, or the string 'random' for a seeded point in the box."""
    if x0 is None:
        x0 = np.clip(np.zeros(qp.n), qp.box.lo, qp.box.hi)
    elif isinstance(x0, str):
        if x0 != "random":
            raise ConfigError(f"unknown initial point {x0!r}")
        x0 = qp.box.sample(np.random.default_rng([0 if seed is None else int(seed), 3]))
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (qp.n,):
        raise ConfigError(f"x0 has shape {x0.shape}, expected ({qp.n},)")
    if not qp.box.contains(x0):
        raise PreconditionError("x0 must lie in the box")
    return x0


def run(
    qp: TimeVaryingQP,
    plan: SamplingPlan,
    schedule: AsyncSchedule,
    gamma: GammaPolicy,
    mode: str = PAPER_LITERAL,
    x0=None,
    seed: int | None = None,
    audit: bool = False,
) -> RunTrace:
    """Run the asynchronous algorithm over every sample event of the plan."""
    if plan.N != qp.N or schedule.N != qp.N:
        raise ConfigError("plan, schedule and problem disagree on the number of agents")
    Z = plan.T + 1
    if schedule.kappa.size != Z:
        raise ConfigError(f"schedule covers {schedule.kappa.size} intervals but the plan has {Z} sample events")
    aggregates = [build_aggregate(qp, plan.sample_state(z)) for z in range(Z)]
    aggregates[0].direction_matrix(mode)
    gammas = resolve_gammas(gamma, qp, plan, schedule, aggregates)
    x0 = initial_point(qp, x0, seed)

    K = schedule.K
    history = np.empty((K + 1, qp.n))
    history[0] = x0
    s_norm = np.empty(K)
    state = NetworkState.initial(x0, qp.N)
    ages = np.empty((K, qp.N, qp.N), dtype=np.int64) if audit else None
    views = np.empty((K, qp.N, qp.n)) if audit else None
    lo, hi = qp.box.lo, qp.box.hi
    for z in range(Z):
        agg = aggregates[z]
        for k in range(schedule.start(z), int(schedule.eta[z])):
            s = step(k, agg, schedule, state, gammas[z], lo, hi, history, mode)
            if audit:
                ages[k] = k - state.held
                views[k] = state.views
            history[k + 1] = state.x
            s_norm[k] = np.linalg.norm(s)
    if not np.all(np.isfinite(history)):
        raise NonFiniteTraceError("state trajectory contains non-finite values")
    return RunTrace(
        states=history,
        s_norm=s_norm,
        interval_of_iteration=schedule.interval_of_iteration,
        eta=schedule.eta.copy(),
        t=plan.union_times.astype(float),
        theta=plan.theta.astype(float),
        gammas=gammas,
        aggregates=aggregates,
        B=schedule.B,
        copy_ages=ages,
        views=views,
    )


def estimate_khat(trace: RunTrace, z: int, threshold: float) -> int:
    """Offset from the interval start of the first k >= start + B with ||s(k)|| < threshold.

    Returns kappa_z when no such iteration exists inside the interval.
    """
    start = trace.start(z)
    stop = int(trace.eta[z])
    kappa = stop - start
    seg = trace.s_norm[start + trace.B : stop]
    hits = np.flatnonzero(seg < threshold)
    return int(trace.B + hits[0]) if hits.size else kappa
