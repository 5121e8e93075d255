"""Time-varying quadratic programs, box constraints and the sampled aggregate objective.

Costs use the half-quadratic convention ``f(x; t) = 1/2 x'Q(t)x + r(t)'x`` so that
the block gradient ``Q^[i](t) x + r^[i](t)`` is exactly the agents' update direction.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import ConfigError, PreconditionError

PAPER_LITERAL = "paper_literal"
SYMMETRIZED = "symmetrized"
GRADIENT_MODES = (PAPER_LITERAL, SYMMETRIZED)


@dataclass(frozen=True)
class BlockPartition:
    """Per-agent block sizes of the decision vector."""

    sizes: tuple[int, ...]

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        if not sizes or any(s < 1 for s in sizes):
            raise ConfigError(f"block sizes must be a nonempty list of positive ints, got {self.sizes}")
        object.__setattr__(self, "sizes", sizes)

    @classmethod
    def uniform(cls, n_agents: int, block_size: int) -> "BlockPartition":
        return cls((block_size,) * n_agents)

    @property
    def N(self) -> int:
        return len(self.sizes)

    @property
    def n(self) -> int:
        return sum(self.sizes)

    @cached_property
    def offsets(self) -> tuple[int, ...]:
        return tuple(int(o) for o in np.concatenate([[0], np.cumsum(self.sizes)[:-1]]))

    def block(self, i: int) -> slice:
        if not 0 <= i < self.N:
            raise PreconditionError(f"agent index {i} out of range for {self.N} agents")
        return slice(self.offsets[i], self.offsets[i] + self.sizes[i])

    @cached_property
    def owner(self) -> np.ndarray:
        """Agent index owning each coordinate."""
        return np.repeat(np.arange(self.N), self.sizes)


@dataclass(frozen=True, eq=False)
class Box:
    """Axis-aligned box ``[lo, hi]``; the only constraint sets supported."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float).ravel()
        hi = np.asarray(self.hi, dtype=float).ravel()
        if lo.shape != hi.shape:
            raise ConfigError("box bounds have different lengths")
        if not np.all(np.isfinite(lo)) or not np.all(np.isfinite(hi)):
            raise ConfigError("box bounds must be finite")
        if np.any(lo >= hi):
            raise ConfigError("box must have nonempty interior (lo < hi componentwise)")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def cube(cls, n: int, lo: float, hi: float) -> "Box":
        return cls(np.full(n, float(lo)), np.full(n, float(hi)))

    @property
    def n(self) -> int:
        return self.lo.size

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.hi - self.lo))

    @property
    def inradius(self) -> float:
        return 0.5 * float(np.min(self.hi - self.lo))

    @property
    def volume(self) -> float:
        return float(np.prod(self.hi - self.lo))

    @property
    def max_norm(self) -> float:
        """max over the box of ||x||, attained at the vertex furthest from the origin."""
        return float(np.linalg.norm(np.maximum(np.abs(self.lo), np.abs(self.hi))))

    def clamp(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, self.lo, self.hi)

    def contains(self, x: np.ndarray, tol: float = 0.0) -> bool:
        x = np.asarray(x)
        return bool(np.all(x >= self.lo - tol) and np.all(x <= self.hi + tol))

    def sample(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        shape = (self.n,) if size is None else (size, self.n)
        return self.lo + (self.hi - self.lo) * rng.random(shape)


# -- time-varying families -----------------------------------------------------


def _row_block_norms(M: np.ndarray, partition: BlockPartition) -> np.ndarray:
    return np.array([np.linalg.norm(M[partition.block(i)], 2) for i in range(partition.N)])


def _vec_block_norms(v: np.ndarray, partition: BlockPartition) -> np.ndarray:
    return np.array([np.linalg.norm(v[partition.block(i)]) for i in range(partition.N)])


@dataclass(frozen=True, eq=False)
class ConstantFamily:
    """Static problem: Q(t) = Q0, r(t) = r0."""

    q0: np.ndarray
    r0: np.ndarray

    def Q(self, t: float) -> np.ndarray:
        return self.q0

    def r(self, t: float) -> np.ndarray:
        return self.r0

    def lipschitz_Q(self, partition: BlockPartition) -> np.ndarray:
        return np.zeros(partition.N)

    def lipschitz_r(self, partition: BlockPartition) -> np.ndarray:
        return np.zeros(partition.N)

    def matrices(self) -> list[np.ndarray]:
        return [self.q0]


@dataclass(frozen=True, eq=False)
class CosineFamily:
    """Q(t) = Q0 + A cos(wt) + S sin(wt),  r(t) = r0 + r_amp sin(c w t).

    With ``A = I``, ``S = 0``, ``r0 = 0``, ``r_amp = 100 * ones``, ``c = 2`` this is
    the randomly generated benchmark of the numerical section.
    """

    q0: np.ndarray
    amp: np.ndarray
    omega: float
    sin_amp: np.ndarray | None = None
    r0: np.ndarray | None = None
    r_amp: np.ndarray | None = None
    r_freq: float = 1.0

    def __post_init__(self):
        n = self.q0.shape[0]
        if self.sin_amp is None:
            object.__setattr__(self, "sin_amp", np.zeros((n, n)))
        if self.r0 is None:
            object.__setattr__(self, "r0", np.zeros(n))
        if self.r_amp is None:
            object.__setattr__(self, "r_amp", np.zeros(n))

    def Q(self, t: float) -> np.ndarray:
        wt = self.omega * t
        return self.q0 + self.amp * np.cos(wt) + self.sin_amp * np.sin(wt)

    def r(self, t: float) -> np.ndarray:
        return self.r0 + self.r_amp * np.sin(self.r_freq * self.omega * t)

    def lipschitz_Q(self, partition: BlockPartition) -> np.ndarray:
        # dQ/dt = w [A | S] [-sin I; cos I], and the right factor has unit norm
        stacked = np.hstack([self.amp, self.sin_amp])
        return abs(self.omega) * _row_block_norms(stacked, partition)

    def lipschitz_r(self, partition: BlockPartition) -> np.ndarray:
        return abs(self.r_freq * self.omega) * _vec_block_norms(self.r_amp, partition)

    def matrices(self) -> list[np.ndarray]:
        return [self.q0, self.amp, self.sin_amp]


@dataclass(frozen=True, eq=False)
class TrackingFamily:
    """Squared distance to a moving reference: 1/2 (x - c(t))'Q0(x - c(t)), c(t) = 1 (x) ref(t).

    The time-varying constant 1/2 c'Q0c is dropped; it does not move minimizers.
    Reference component j is ``amplitude[j] * cos(freq[j] t)`` for ``kinds[j] == "cos"``
    and ``amplitude[j] * sin(freq[j] t)`` for ``"sin"``.
    """

    q0: np.ndarray
    amplitude: tuple[float, ...]
    freq: tuple[float, ...]
    kinds: tuple[str, ...] = ("cos", "sin")

    def __post_init__(self):
        d = len(self.amplitude)
        if len(self.freq) != d or len(self.kinds) != d:
            raise ConfigError("reference amplitude, freq and kinds must have equal length")
        if self.q0.shape[0] % d:
            raise ConfigError("dimension must be a multiple of the reference dimension")
        if any(k not in ("cos", "sin") for k in self.kinds):
            raise ConfigError(f"reference kinds must be 'cos' or 'sin', got {self.kinds}")

    def reference(self, t: float) -> np.ndarray:
        a = np.asarray(self.amplitude, dtype=float)
        w = np.asarray(self.freq, dtype=float) * t
        trig = np.where(np.array(self.kinds) == "cos", np.cos(w), np.sin(w))
        return a * trig

    def target(self, t: float) -> np.ndarray:
        return np.tile(self.reference(t), self.q0.shape[0] // len(self.amplitude))

    def Q(self, t: float) -> np.ndarray:
        return self.q0

    def r(self, t: float) -> np.ndarray:
        return -self.q0 @ self.target(t)

    def lipschitz_Q(self, partition: BlockPartition) -> np.ndarray:
        return np.zeros(partition.N)

    def lipschitz_r(self, partition: BlockPartition) -> np.ndarray:
        copies = self.q0.shape[0] // len(self.amplitude)
        speed = float(np.linalg.norm(np.asarray(self.amplitude) * np.asarray(self.freq)))
        return _row_block_norms(self.q0, partition) * np.sqrt(copies) * speed

    def matrices(self) -> list[np.ndarray]:
        return [self.q0]


Family = ConstantFamily | CosineFamily | TrackingFamily


@dataclass(frozen=True, eq=False)
class TimeVaryingQP:
    """A parametric family Q(t), r(t) over a box, split into agent blocks."""

    partition: BlockPartition
    box: Box
    family: Family
    xi: float
    value_offset: float = 0.0

    def __post_init__(self):
        n = self.partition.n
        if self.box.n != n:
            raise ConfigError(f"box dimension {self.box.n} != partition dimension {n}")
        q0 = self.family.Q(0.0)
        if q0.shape != (n, n) or self.family.r(0.0).shape != (n,):
            raise ConfigError("family matrices do not match the partition dimension")
        if not self.xi > 0:
            raise ConfigError(f"strong convexity parameter must be positive, got {self.xi}")
        if self.value_offset < 0:
            raise ConfigError("value_offset must be nonnegative")

    @property
    def n(self) -> int:
        return self.partition.n

    @property
    def N(self) -> int:
        return self.partition.N

    def Q(self, t: float) -> np.ndarray:
        return self.family.Q(t)

    def r(self, t: float) -> np.ndarray:
        return self.family.r(t)

    @cached_property
    def lipschitz_Q(self) -> np.ndarray:
        return self.family.lipschitz_Q(self.partition)

    @cached_property
    def lipschitz_r(self) -> np.ndarray:
        return self.family.lipschitz_r(self.partition)

    def cost(self, x: np.ndarray, t: float) -> float:
        """Cost of the synchronously sampled problem at time t."""
        Q = self.Q(t)
        return float(0.5 * x @ Q @ x + self.r(t) @ x + self.value_offset)

    def with_offset(self, value_offset: float) -> "TimeVaryingQP":
        return TimeVaryingQP(self.partition, self.box, self.family, self.xi, value_offset)

    def check_assumptions(self, times: Sequence[float]) -> list[str]:
        """Symmetry and strong convexity of Q(t) on ``times``; returns problems found."""
        problems = []
        for t in times:
            Q = self.Q(t)
            asym = float(np.max(np.abs(Q - Q.T)))
            if asym > 1e-12:
                problems.append(f"Q({t}) not symmetric (max |Q - Q'| = {asym:.3g})")
                continue
            lam = float(np.linalg.eigvalsh(Q)[0])
            if lam < self.xi - 1e-12:
                problems.append(f"lambda_min(Q({t})) = {lam:.6g} < xi = {self.xi:.6g}")
        return problems


def min_eigenvalue(family: Family, times: Sequence[float]) -> float:
    return min(float(np.linalg.eigvalsh(0.5 * (family.Q(t) + family.Q(t).T))[0]) for t in times)


def make_qp(
    partition: BlockPartition,
    box: Box,
    family: Family,
    horizon: float,
    xi: float | None = None,
    value_offset: float = 0.0,
    grid_points: int = 101,
) -> TimeVaryingQP:
    """Build a problem, taking xi as the smallest eigenvalue on a time grid when not given.

    Raises ConfigError when Q(t) fails symmetry or strong convexity on the grid.
    """
    times = np.linspace(0.0, horizon, grid_points)
    if xi is None:
        xi = min_eigenvalue(family, times)
        if not xi > 0:
            raise ConfigError(f"Q(t) is not positive definite on [0, {horizon}] (min eigenvalue {xi:.6g})")
    qp = TimeVaryingQP(partition, box, family, float(xi), value_offset)
    problems = qp.check_assumptions(times)
    if problems:
        raise ConfigError("; ".join(problems[:3]))
    return qp


def random_spd(n: int, rng: np.random.Generator) -> np.ndarray:
    """M'M + I from a standard normal M, symmetrized."""
    M = rng.standard_normal((n, n))
    Q = M.T @ M + np.eye(n)
    return 0.5 * (Q + Q.T)


def coupling_mask(qp: TimeVaryingQP) -> np.ndarray:
    """mask[i, j] is True when agent i's update reads block j (nonzero row-block entries)."""
    part = qp.partition
    pattern = np.zeros((qp.n, qp.n), dtype=bool)
    for M in qp.family.matrices():
        pattern |= np.abs(M) > 0
    mask = np.zeros((part.N, part.N), dtype=bool)
    for i in range(part.N):
        for j in range(part.N):
            mask[i, j] = pattern[part.block(i), part.block(j)].any()
    np.fill_diagonal(mask, True)
    return mask


# -- sampling state and aggregate objective ------------------------------------


@dataclass(frozen=True, eq=False)
class SampleState:
    """theta[i] is the time of agent i's freshest sample not after t_z."""

    theta: np.ndarray
    t_z: float

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float).ravel()
        if np.any(theta > self.t_z + 1e-12):
            raise PreconditionError("sample times must not exceed t_z")
        object.__setattr__(self, "theta", theta)

    @classmethod
    def synchronous(cls, n_agents: int, t: float) -> "SampleState":
        return cls(np.full(n_agents, float(t)), float(t))


@dataclass(frozen=True, eq=False)
class AggregateObjective:
    """Row-block stacking of each agent's latest sampled Q and r blocks."""

    q_hat: np.ndarray
    r_hat: np.ndarray
    t_z: float
    sample_state: SampleState
    partition: BlockPartition
    value_offset: float = 0.0

    @cached_property
    def q_sym(self) -> np.ndarray:
        return 0.5 * (self.q_hat + self.q_hat.T)

    @property
    def n(self) -> int:
        return self.partition.n

    def cost(self, x: np.ndarray) -> float:
        return eval_cost(self, x)

    def costs(self, X: np.ndarray) -> np.ndarray:
        """Vectorized cost over the rows of X."""
        X = np.atleast_2d(X)
        return 0.5 * np.einsum("ij,jk,ik->i", X, self.q_hat, X) + X @ self.r_hat + self.value_offset

    def gradient(self, x: np.ndarray) -> np.ndarray:
        """True gradient of the cost (uses the symmetric part)."""
        return self.q_sym @ x + self.r_hat

    def direction_matrix(self, mode: str) -> np.ndarray:
        if mode == PAPER_LITERAL:
            return self.q_hat
        if mode == SYMMETRIZED:
            return self.q_sym
        raise ConfigError(f"unknown gradient mode {mode!r}; expected one of {GRADIENT_MODES}")

    def block_direction(self, i: int, x: np.ndarray, mode: str = PAPER_LITERAL) -> np.ndarray:
        return eval_block_direction(self, i, x, mode)

    def fingerprint(self) -> str:
        """Short stable digest of (q_hat, r_hat) for trace bookkeeping."""
        import hashlib

        h = hashlib.sha1(np.ascontiguousarray(self.q_hat).tobytes())
        h.update(np.ascontiguousarray(self.r_hat).tobytes())
        return h.hexdigest()[:12]


def build_aggregate(qp: TimeVaryingQP, sample_state: SampleState) -> AggregateObjective:
    """Evaluate each row block of Q and r at that agent's own sample time."""
    part = qp.partition
    if sample_state.theta.size != part.N:
        raise ConfigError(
            f"sample state has {sample_state.theta.size} entries but the partition has {part.N} agents"
        )
    q_hat = np.empty((part.n, part.n))
    r_hat = np.empty(part.n)
    cache: dict[float, tuple[np.ndarray, np.ndarray]] = {}
    for i, th in enumerate(sample_state.theta):
        th = float(th)
        if th not in cache:
            cache[th] = (qp.Q(th), qp.r(th))
        Q, r = cache[th]
        rows = part.block(i)
        q_hat[rows] = Q[rows]
        r_hat[rows] = r[rows]
    q_hat.setflags(write=False)
    r_hat.setflags(write=False)
    return AggregateObjective(q_hat, r_hat, float(sample_state.t_z), sample_state, part, qp.value_offset)


def sampled_objective(qp: TimeVaryingQP, t: float) -> AggregateObjective:
    """The synchronously sampled problem at time t, as an aggregate."""
    return build_aggregate(qp, SampleState.synchronous(qp.N, t))


def eval_cost(agg: AggregateObjective, x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    if x.shape != (agg.n,):
        raise PreconditionError(f"x has shape {x.shape}, expected ({agg.n},)")
    return float(0.5 * x @ agg.q_hat @ x + agg.r_hat @ x + agg.value_offset)


def eval_block_direction(agg: AggregateObjective, i: int, x: np.ndarray, mode: str = PAPER_LITERAL) -> np.ndarray:
    """Update direction of agent i: literal row block of q_hat, or the true block gradient."""
    M = agg.direction_matrix(mode)
    rows = agg.partition.block(i)
    return M[rows] @ np.asarray(x, dtype=float) + agg.r_hat[rows]


def project_box(box: Box, partition: BlockPartition, i: int, v: np.ndarray) -> np.ndarray:
    rows = partition.block(i)
    return np.clip(v, box.lo[rows], box.hi[rows])


def continuous_jump_constant(qp: TimeVaryingQP) -> float:
    """Worst-case increase of the aggregate cost per unit of sample-time drift."""
    R = qp.box.max_norm
    return float(0.5 * R**2 * np.sum(qp.lipschitz_Q) + R * np.sum(qp.lipschitz_r))
