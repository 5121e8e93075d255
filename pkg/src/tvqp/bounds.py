"""Closed-form constants, the admissible step size and the tracking bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BoundRangeError, ConfigError
from .oracle import l2_distance_squared
from .qp_model import AggregateObjective, Box, TimeVaryingQP, build_aggregate, continuous_jump_constant
from .schedule import AsyncSchedule, SamplingPlan

GAMMA_TERMS = (
    "half",
    "descent",
    "ratio_inverse",
    "root",
    "d_over_e",
    "inverse_2c",
    "d_over_8fc",
    "delay",
)


@dataclass(frozen=True)
class ObjectiveConstants:
    """Smoothness and size constants of the aggregate cost on the box."""

    L: float
    M: float
    M_g: float
    L_g: float
    d_X: float
    r_X: float
    L_t: float
    Delta: float


@dataclass(frozen=True)
class BoundInputs:
    N: int
    B: int
    n: int
    lam: float = 1.0
    sigma: float | None = None
    epsilon: float = math.nan
    kappa: int = 1
    r: int | None = None
    phi: float = 1.0
    psi: float = 1.0
    u_bar: float = 1.0
    nu_X: float | None = None

    @property
    def r_eff(self) -> int:
        """r_z, taken as kappa_z // B unless supplied."""
        return self.kappa // self.B if self.r is None else self.r

    @property
    def nu(self) -> float:
        return 2.0**-self.n if self.nu_X is None else self.nu_X


@dataclass(frozen=True)
class ConstantsBlock:
    D: float
    E: float
    F: float
    G: float
    a: float
    b: float
    c: float
    rho: float
    K: float
    gamma: float
    gamma_max: float = math.nan
    terms: dict = field(default_factory=dict, compare=False)


def objective_constants(agg: AggregateObjective, qp: TimeVaryingQP, delta: float = 0.0) -> ObjectiveConstants:
    """L = ||sym(Q_hat)||, gradient bound M, cost bound M_g, Lipschitz constant L_g = M."""
    box = qp.box
    w = np.linalg.eigvalsh(agg.q_sym)
    L = float(max(abs(w[0]), abs(w[-1])))
    R = box.max_norm
    rn = float(np.linalg.norm(agg.r_hat))
    M = L * R + rn
    M_g = 0.5 * L * R**2 + rn * R + agg.value_offset
    return ObjectiveConstants(
        L=L, M=M, M_g=M_g, L_g=M, d_X=box.diameter, r_X=box.inradius, L_t=continuous_jump_constant(qp), Delta=delta
    )


def _div(a: float, b: float) -> float:
    if b == 0:
        return math.inf if a > 0 else (0.0 if a == 0 else -math.inf)
    return a / b


def core_constants(L: float, N: int, B: int, lam: float, gamma: float) -> tuple[float, float, float, float]:
    D = (2.0 - gamma * L * (1 + B + N * B)) / 2.0
    E = L * N * B / 2.0
    F = (
        N * L**2 / 2.0 * (N * (7 * L**2 + 6 * L + 3) + 3)
        + 1.5
        * (
            B * N * (6 * L**4 + 12 * L**3 + 14 * L**2)
            + 3 * L**2
            + 6 * L
            + 7
            + N * lam**2 * (L**2 * (B * N * (6 * L**2 + 8) + 3) + 4)
        )
        + 1.0
    )
    G = (
        N * L**2 / 2.0 * (N * (7 * L**2 + 6 * L + 3) + 3)
        + L * B * N / 2.0
        + N * B * L**2 * (9 * L**2 + 18 * L + 21 + N * lam**2 * (9 * L**2 + 12))
    )
    return D, E, F, G


def constants_block(
    oc: ObjectiveConstants, bi: BoundInputs, gamma: float, prev: tuple[float, float, int] | None = None
) -> ConstantsBlock:
    """Evaluate the constants for one interval.

    ``prev`` is ``(a_{z-1}, rho_{z-1}, r_{z-1})``; None selects the first-interval
    formulas for a and b.
    """
    if not 0 < gamma < 1:
        raise BoundRangeError(f"step size {gamma} outside (0, 1)")
    L, N, B, d = oc.L, bi.N, bi.B, oc.d_X
    sigma = d if bi.sigma is None else bi.sigma
    D, E, F, G = core_constants(L, N, B, bi.lam, gamma)
    if D <= 0:
        raise BoundRangeError(f"D = {D:.6g} <= 0: step size {gamma} too large for L = {L:.6g}")
    ratio = G / F + E / D
    c = D / (2 * F + 2 * D)
    rho = 1.0 - gamma * c
    delay_term = 4 * L * B**2 * d**2 * E * ratio * F / D
    K = 2 * oc.L_t * oc.Delta + B * d * oc.M + oc.L_g * sigma + delay_term
    if prev is None:
        a = max(oc.L_g * d, 8 * E * ratio * F * B * d**2 / D)
        b = _div(D * a, 8 * E * ratio * F)
    else:
        a_prev, rho_prev, r_prev = prev
        a = a_prev * rho_prev ** (r_prev - 1) + K
        b = B * d**2
    return ConstantsBlock(D=D, E=E, F=F, G=G, a=a, b=b, c=c, rho=rho, K=K, gamma=gamma)


def gamma_terms(oc: ObjectiveConstants, bi: BoundInputs, gamma: float, prev=None) -> dict[str, float]:
    """The eight upper limits on the step size, evaluated at a trial gamma."""
    L, N, B = oc.L, bi.N, bi.B
    cb = constants_block(oc, bi, gamma, prev)
    D, E, F, G, c = cb.D, cb.E, cb.F, cb.G, cb.c
    ratio = G / F + E / D
    A = _div(cb.a, cb.b) + 2 * E + D * c
    disc = max(A * A - 4 * D * E * c, 0.0)
    return {
        "half": 0.5,
        "descent": _div(2.0, L * (1 + B + 2 * N * B)),
        "ratio_inverse": 1.0 / ratio,
        # stable form of (A - sqrt(A^2 - 4DEc)) / (2Ec)
        "root": 2 * D / (A + math.sqrt(disc)),
        "d_over_e": _div(D, E),
        "inverse_2c": 1.0 / (2 * c),
        "d_over_8fc": D / (8 * F * ratio * c),
        "delay": _div(2.0, 3 * L * B * N + L * B),
    }


def _feasible(oc, bi, gamma, prev) -> tuple[bool, str | None]:
    try:
        terms = gamma_terms(oc, bi, gamma, prev)
    except BoundRangeError:
        return False, "D_positive"
    for name in GAMMA_TERMS:
        if not gamma <= terms[name]:
            return False, name
    return True, None


def gamma_max(oc: ObjectiveConstants, bi: BoundInputs, prev=None, rtol: float = 1e-9) -> float:
    """Largest gamma that satisfies every term evaluated at gamma itself.

    A halving scan from 1/2 locates the first feasible point; bisection in log
    space then closes the gap to the first infeasible one. The feasible end is
    returned, so substituting the result back satisfies every term.
    """
    ok, _ = _feasible(oc, bi, 0.5, prev)
    if ok:
        return 0.5
    hi = 0.5
    lo = hi
    failed = None
    for _ in range(1100):
        lo /= 2.0
        ok, why = _feasible(oc, bi, lo, prev)
        if ok:
            break
        hi, failed = lo, why
    else:
        raise ConfigError(f"no admissible step size: term {failed!r} fails for every gamma > 0")
    while hi / lo - 1.0 > rtol:
        mid = math.sqrt(lo * hi)
        if _feasible(oc, bi, mid, prev)[0]:
            lo = mid
        else:
            hi = mid
    return lo


def theorem1_bound(a0: float, rhos, rs, Ks) -> tuple[np.ndarray, float]:
    """Accumulated bound per interval and the ultimate (steady state) cap.

    ``Ks[0]`` is ignored: the first interval contributes through a0 only.
    """
    rhos = np.asarray(rhos, dtype=float)
    rs = np.asarray(rs, dtype=float)
    Ks = np.asarray(Ks, dtype=float)
    # rho = 1 - gamma c rounds to exactly 1 when gamma c is below machine epsilon
    if np.any(rhos <= 0) or np.any(rhos > 1):
        raise BoundRangeError("every rho must lie in (0, 1]")
    contraction = rhos ** (rs - 1)
    out = np.empty(rhos.size)
    acc = a0
    for z in range(rhos.size):
        if z > 0:
            acc += Ks[z]
        acc *= contraction[z]
        out[z] = acc
    q = float(contraction.max())
    cap = float(Ks[1:].max() * q / (1 - q)) if Ks.size > 1 and q < 1 else (0.0 if Ks.size <= 1 else math.inf)
    return out, cap


def k1(n: int, nu_X: float, r_X: float, d_X: float, phi: float) -> float:
    return phi**2 * math.pi ** (n / 2) / (n * 2 ** (n + 3) * math.gamma(n / 2)) * nu_X * (r_X / d_X) ** n


def argmin_distance_bound(l2_sq: float, K1: float, n: int, u_bar: float, phi: float) -> float:
    if not K1 > 0 or not phi > 0:
        raise BoundRangeError("K1 and phi must be positive")
    return (4 * u_bar / phi) ** (n / (2 * n + 4)) * (l2_sq / K1) ** (1 / (2 * n + 4))


def theorem2_bound(a_z: float, rho_z: float, r_z: int, K1: float, K2: float, n: int, u_bar: float, phi: float) -> float:
    return a_z * rho_z ** (r_z - 1) + argmin_distance_bound(K2, K1, n, u_bar, phi)


def _quadratic_parts(Q: np.ndarray, r: np.ndarray, offset: float):
    """Coefficients (A, b, c) of 1/2 x'Qx + r'x + offset in the x'Ax + b'x + c form."""
    return 0.5 * (0.5 * (Q + Q.T)), np.asarray(r, dtype=float), float(offset)


def k2_terms(qp: TimeVaryingQP, t_z: float, agg: AggregateObjective, M_g: float) -> tuple[float, float]:
    """(||f - h||^2, ||f - g||^2) at one sample event, with h = 1/2||x||^2 + M_g."""
    box = qp.box
    f = _quadratic_parts(qp.Q(t_z), qp.r(t_z), qp.value_offset)
    g = _quadratic_parts(agg.q_hat, agg.r_hat, agg.value_offset)
    h = (0.5 * np.eye(qp.n), np.zeros(qp.n), M_g)
    return l2_distance_squared(*f, *h, box), l2_distance_squared(*f, *g, box)


def k2(qp: TimeVaryingQP, times, aggregates, M_gs) -> float:
    """max over sample events of max(||f - h||^2, ||f - g||^2)."""
    return max(max(k2_terms(qp, float(t), agg, M_g)) for t, agg, M_g in zip(times, aggregates, M_gs))


# -- per-interval tables ------------------------------------------------------------


@dataclass(frozen=True)
class IntervalBound:
    z: int
    t_z: float
    oc: ObjectiveConstants
    block: ConstantsBlock
    r: int
    thm1: float
    thm2: float = math.nan


def interval_bounds(
    qp: TimeVaryingQP,
    plan: SamplingPlan,
    kappa,
    B: int,
    aggregates: list[AggregateObjective] | None = None,
    gammas=None,
    factor: float = 0.9,
    lam: float = 1.0,
    sigma: float | None = None,
    rs=None,
) -> list[IntervalBound]:
    """Constants and accumulated tracking bounds for every interval.

    Without ``gammas`` each interval is evaluated at ``factor * gamma_max_z``.
    """
    Z = plan.T + 1
    kappa = np.broadcast_to(np.asarray(kappa, dtype=np.int64), (Z,))
    if aggregates is None:
        aggregates = [build_aggregate(qp, plan.sample_state(z)) for z in range(Z)]
    out: list[IntervalBound] = []
    prev = None
    a0 = None
    rhos, rlist, Ks = [], [], []
    for z in range(Z):
        oc = objective_constants(aggregates[z], qp, plan.delta)
        r_z = int(kappa[z]) // B if rs is None else int(rs[z])
        bi = BoundInputs(N=qp.N, B=B, n=qp.n, lam=lam, sigma=sigma, kappa=int(kappa[z]), r=r_z)
        gmax = gamma_max(oc, bi, prev)
        gamma = factor * gmax if gammas is None else float(np.broadcast_to(gammas, (Z,))[z])
        cb = constants_block(oc, bi, gamma, prev)
        terms = gamma_terms(oc, bi, gamma, prev)
        cb = ConstantsBlock(**{**cb.__dict__, "gamma_max": gmax, "terms": terms})
        if a0 is None:
            a0 = cb.a
        rhos.append(cb.rho)
        rlist.append(r_z)
        Ks.append(cb.K)
        thm1 = theorem1_bound(a0, rhos, rlist, Ks)[0][-1]
        out.append(IntervalBound(z, float(plan.union_times[z]), oc, cb, r_z, float(thm1)))
        prev = (cb.a, cb.rho, r_z)
    return out


def auto_gammas(
    qp: TimeVaryingQP,
    plan: SamplingPlan,
    schedule: AsyncSchedule,
    aggregates: list[AggregateObjective] | None = None,
    factor: float = 0.9,
    lam: float = 1.0,
) -> np.ndarray:
    """factor * gamma_max_z for every interval of a run."""
    rows = interval_bounds(qp, plan, schedule.kappa, schedule.B, aggregates, factor=factor, lam=lam)
    return np.array([row.block.gamma for row in rows])


def theorem2_column(qp: TimeVaryingQP, rows: list[IntervalBound], aggregates, nu_X: float | None = None) -> list[IntervalBound]:
    """Attach the bound with the argmin-drift floor; phi = xi, psi = max L_z, u_bar = max M_z."""
    phi = qp.xi
    u_bar = max(row.oc.M for row in rows)
    nu = 2.0**-qp.n if nu_X is None else nu_X
    box: Box = qp.box
    K1 = k1(qp.n, nu, box.inradius, box.diameter, phi)
    K2 = k2(qp, [row.t_z for row in rows], aggregates, [row.oc.M_g for row in rows])
    out = []
    for row in rows:
        b = theorem2_bound(row.block.a, row.block.rho, row.r, K1, K2, qp.n, u_bar, phi)
        out.append(IntervalBound(row.z, row.t_z, row.oc, row.block, row.r, row.thm1, float(b)))
    return out
