"""Reference algorithms: dense synchronous BCD and decentralized consensus gradient."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import RunTrace, initial_point
from .errors import ConfigError
from .qp_model import AggregateObjective, TimeVaryingQP, build_aggregate, sampled_objective
from .schedule import SamplingPlan, expand_kappa


def run_sync_bcd(qp: TimeVaryingQP, times, kappa, gamma: float, x0=None, seed: int | None = None) -> RunTrace:
    """Projected gradient on the synchronously sampled problem at each time in ``times``."""
    times = np.asarray(times, dtype=float)
    kap = expand_kappa(kappa, times.size)
    if not gamma > 0:
        raise ConfigError("gamma must be positive")
    aggs = [sampled_objective(qp, float(t)) for t in times]
    x = initial_point(qp, x0, seed)
    K = int(kap.sum())
    states = np.empty((K + 1, qp.n))
    states[0] = x
    s_norm = np.empty(K)
    k = 0
    for agg, kz in zip(aggs, kap):
        Q, r = agg.q_hat, agg.r_hat
        for _ in range(int(kz)):
            new = np.clip(x - gamma * (Q @ x + r), qp.box.lo, qp.box.hi)
            s_norm[k] = np.linalg.norm(new - x)
            x = new
            k += 1
            states[k] = x
    return RunTrace(
        states=states,
        s_norm=s_norm,
        interval_of_iteration=np.repeat(np.arange(kap.size), kap),
        eta=np.cumsum(kap),
        t=times,
        theta=np.repeat(times[:, None], qp.N, axis=1),
        gammas=np.full(kap.size, float(gamma)),
        aggregates=aggs,
        B=1,
        label="sync_bcd",
    )


@dataclass(frozen=True, eq=False)
class ConsensusConfig:
    """Doubly stochastic mixing weights and the local step size."""

    weights: np.ndarray
    gamma: float
    topology: str = "complete"

    def __post_init__(self):
        W = np.asarray(self.weights, dtype=float)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise ConfigError("weight matrix must be square")
        if np.any(W < 0):
            raise ConfigError("weights must be nonnegative")
        if np.max(np.abs(W.sum(axis=0) - 1)) > 1e-12 or np.max(np.abs(W.sum(axis=1) - 1)) > 1e-12:
            raise ConfigError("weight matrix must be doubly stochastic")
        if not self.gamma > 0:
            raise ConfigError("consensus gamma must be positive")
        object.__setattr__(self, "weights", W)

    @classmethod
    def build(cls, n_agents: int, gamma: float, topology: str = "complete") -> "ConsensusConfig":
        return cls(metropolis_weights(n_agents, topology), gamma, topology)

    def spectral_gap(self) -> float:
        w = np.sort(np.abs(np.linalg.eigvals(self.weights)))[::-1]
        return float(1.0 - w[1]) if w.size > 1 else 1.0


def metropolis_weights(n_agents: int, topology: str = "complete") -> np.ndarray:
    """Metropolis-Hastings weights on a complete graph or a ring."""
    adj = np.zeros((n_agents, n_agents), dtype=bool)
    if topology == "complete":
        adj[:] = True
    elif topology == "ring":
        for i in range(n_agents):
            adj[i, (i + 1) % n_agents] = adj[(i + 1) % n_agents, i] = True
    else:
        raise ConfigError(f"unknown topology {topology!r}; use 'complete' or 'ring'")
    np.fill_diagonal(adj, False)
    deg = adj.sum(axis=1)
    W = np.zeros((n_agents, n_agents))
    for i in range(n_agents):
        for j in np.flatnonzero(adj[i]):
            W[i, j] = 1.0 / (1 + max(deg[i], deg[j]))
        W[i, i] = 1.0 - W[i].sum()
    return W


def run_consensus(
    qp: TimeVaryingQP,
    plan: SamplingPlan,
    config: ConsensusConfig,
    kappa,
    x0=None,
    seed: int | None = None,
) -> RunTrace:
    """Each agent keeps a full copy y_i and mixes before a local projected gradient step.

    Agent i's local cost is (1/N) times the problem sampled at its own latest
    sample time. The reported state is the average of the copies.
    """
    N = qp.N
    if config.weights.shape != (N, N):
        raise ConfigError("weight matrix size does not match the number of agents")
    Z = plan.T + 1
    kap = expand_kappa(kappa, Z)
    x = initial_point(qp, x0, seed)
    Y = np.tile(x, (N, 1))
    K = int(kap.sum())
    states = np.empty((K + 1, qp.n))
    states[0] = x
    s_norm = np.empty(K)
    spread = np.empty(K + 1)
    spread[0] = 0.0
    aggs: list[AggregateObjective] = []
    W, gamma = config.weights, config.gamma
    lo, hi = qp.box.lo, qp.box.hi
    k = 0
    for z in range(Z):
        aggs.append(build_aggregate(qp, plan.sample_state(z)))
        th = plan.theta[z]
        Qs = np.stack([qp.Q(float(t)) for t in th]) / N
        rs = np.stack([qp.r(float(t)) for t in th]) / N
        for _ in range(int(kap[z])):
            grads = np.einsum("inm,im->in", Qs, Y) + rs
            Y = np.clip(W @ Y - gamma * grads, lo, hi)
            avg = Y.mean(axis=0)
            s_norm[k] = np.linalg.norm(avg - states[k])
            k += 1
            states[k] = avg
            spread[k] = np.max(np.linalg.norm(Y - avg, axis=1))
    return RunTrace(
        states=states,
        s_norm=s_norm,
        interval_of_iteration=np.repeat(np.arange(Z), kap),
        eta=np.cumsum(kap),
        t=plan.union_times.astype(float),
        theta=plan.theta.astype(float),
        gammas=np.full(Z, float(gamma)),
        aggregates=aggs,
        B=1,
        label="consensus",
        extra={"disagreement": spread},
    )
