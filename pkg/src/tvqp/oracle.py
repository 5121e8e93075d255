"""Ground truth: minimizers, stationary sets, eigenvalues and L2 distances over a box."""

from __future__ import annotations

import itertools
import warnings
from collections import defaultdict
from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from .errors import OracleError, PreconditionError
from .qp_model import AggregateObjective, Box, TimeVaryingQP


# -- eigenvalues ---------------------------------------------------------------


def jacobi_eigh(S: np.ndarray, tol: float = 1e-15, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi eigen-decomposition of a symmetric matrix.

    Returns eigenvalues sorted descending and matching unit eigenvectors (columns).
    """
    A = np.array(S, dtype=float)
    n = A.shape[0]
    V = np.eye(n)
    scale = max(np.linalg.norm(A), 1e-300)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.tril(A, -1) ** 2))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0)) if theta != 0 else 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                Ap, Aq = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * Ap - s * Aq
                A[:, q] = s * Ap + c * Aq
                Ap, Aq = A[p, :].copy(), A[q, :].copy()
                A[p, :] = c * Ap - s * Aq
                A[q, :] = s * Ap + c * Aq
                Vp, Vq = V[:, p].copy(), V[:, q].copy()
                V[:, p] = c * Vp - s * Vq
                V[:, q] = s * Vp + c * Vq
    w = np.diag(A).copy()
    order = np.argsort(-w, kind="stable")
    return w[order], V[:, order]


def symmetric_part_eigs(M: np.ndarray) -> np.ndarray:
    """Eigenvalues of (M + M')/2, sorted descending."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise PreconditionError("matrix must be square")
    return jacobi_eigh(0.5 * (M + M.T))[0]


# -- projected gradient machinery ------------------------------------------------


def _residual(Q: np.ndarray, r: np.ndarray, lo: np.ndarray, hi: np.ndarray, x: np.ndarray) -> float:
    """||x - P[x - grad]||, the unit-step fixed-point residual."""
    return float(np.linalg.norm(x - np.clip(x - (Q @ x + r), lo, hi)))


def _quad(Q, r, x) -> float:
    return float(0.5 * x @ Q @ x + r @ x)


def _newton_polish(Q, r, lo, hi, x, rounds: int = 20) -> np.ndarray:
    """Active-set refinement: solve the stationarity system on the free coordinates."""
    for _ in range(rounds):
        g = Q @ x + r
        at_lo = (x <= lo) & (g > 0)
        at_hi = (x >= hi) & (g < 0)
        free = ~(at_lo | at_hi)
        if not free.any():
            return x
        y = x.copy()
        y[at_lo], y[at_hi] = lo[at_lo], hi[at_hi]
        fixed = ~free
        rhs = -(r[free] + Q[np.ix_(free, fixed)] @ y[fixed])
        try:
            y[free] = np.linalg.solve(Q[np.ix_(free, free)], rhs)
        except np.linalg.LinAlgError:
            return x
        y = np.clip(y, lo, hi)
        if np.array_equal(y, x):
            return x
        x = y
    return x


def _projected_gradient(Q, r, lo, hi, x, step, tol, max_iter, polish_every: int = 200) -> tuple[np.ndarray, float]:
    best = x
    for it in range(max_iter):
        x = np.clip(x - step * (Q @ x + r), lo, hi)
        if it % polish_every == polish_every - 1 or it == max_iter - 1:
            res = _residual(Q, r, lo, hi, x)
            if res <= tol:
                return x, res
            y = _newton_polish(Q, r, lo, hi, x)
            if _quad(Q, r, y) <= _quad(Q, r, x) and _residual(Q, r, lo, hi, y) < res:
                x = y
                if _residual(Q, r, lo, hi, x) <= tol:
                    return x, _residual(Q, r, lo, hi, x)
        best = x
    return best, _residual(Q, r, lo, hi, best)


def solve_strongly_convex(
    Q: np.ndarray, r: np.ndarray, box: Box, tol: float = 1e-10, x0: np.ndarray | None = None, max_iter: int = 200_000
) -> tuple[np.ndarray, float]:
    """Minimizer and optimal value of 1/2 x'Qx + r'x over the box.

    Projected gradient with step 1/lambda_max(Q), with periodic active-set
    refinements accepted only when they lower the cost and the residual.
    """
    Q = 0.5 * (np.asarray(Q, dtype=float) + np.asarray(Q, dtype=float).T)
    r = np.asarray(r, dtype=float)
    w = np.linalg.eigvalsh(Q)
    if w[0] <= 0:
        raise PreconditionError(f"Q is not positive definite (lambda_min = {w[0]:.3g})")
    lo, hi = box.lo, box.hi
    x = np.clip(np.zeros_like(r), lo, hi) if x0 is None else np.clip(np.asarray(x0, dtype=float), lo, hi)
    x, res = _projected_gradient(Q, r, lo, hi, x, 1.0 / w[-1], tol, max_iter)
    if res > tol:
        raise OracleError(f"projected gradient stalled at residual {res:.3g} > {tol:.3g}")
    return x, _quad(Q, r, x)


# -- stationary sets -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class StationarySet:
    """Projection fixed points of the cost, deduplicated, with their costs."""

    points: np.ndarray
    costs: np.ndarray
    t_z: float
    residual_tol: float
    dedup_radius: float

    def __len__(self) -> int:
        return len(self.costs)


def _dedup(cands: list[tuple[np.ndarray, float]], radius: float) -> list[tuple[np.ndarray, float]]:
    cands = sorted(cands, key=lambda pc: (pc[1], tuple(pc[0])))
    kept: list[tuple[np.ndarray, float]] = []
    for p, c in cands:
        if all(np.linalg.norm(p - q) >= radius for q, _ in kept):
            kept.append((p, c))
    return kept


def _face_points(Q, r, lo, hi, tol) -> list[np.ndarray]:
    """Stationary points found by solving the KKT system on every face of the box."""
    n = r.size
    out = []
    for pattern in itertools.product((0, 1, 2), repeat=n):
        pat = np.array(pattern)
        free = pat == 2
        x = np.where(pat == 0, lo, hi).astype(float)
        if free.any():
            fixed = ~free
            A = Q[np.ix_(free, free)]
            rhs = -(r[free] + Q[np.ix_(free, fixed)] @ x[fixed])
            try:
                sol = np.linalg.solve(A, rhs)
            except np.linalg.LinAlgError:
                continue
            if np.any(sol < lo[free] - 1e-12) or np.any(sol > hi[free] + 1e-12):
                continue
            x[free] = np.clip(sol, lo[free], hi[free])
        if _residual(Q, r, lo, hi, x) <= tol:
            out.append(x)
    return out


def find_stationary_set(
    agg: AggregateObjective,
    box: Box,
    multistarts: int = 64,
    tol: float = 1e-10,
    dedup_radius: float = 1e-6,
    max_iter: int = 100_000,
    face_limit: int = 8,
) -> StationarySet:
    """Stationary points of the aggregate cost over the box.

    A strongly convex aggregate has exactly one point. Otherwise projected
    gradient (symmetrized direction) runs from Halton starts; for n <= face_limit
    every face of the box is also solved exactly, which also recovers saddles.
    """
    Q, r = agg.q_sym, np.asarray(agg.r_hat, dtype=float)
    lo, hi = box.lo, box.hi
    if multistarts < 1:
        raise PreconditionError("multistarts must be >= 1")
    w = np.linalg.eigvalsh(Q)
    cands: list[tuple[np.ndarray, float]] = []
    if w[0] > 0:
        x, _ = solve_strongly_convex(Q, r, box, tol)
        cands.append((x, agg.cost(x)))
    else:
        step = 1.0 / max(abs(w[0]), abs(w[-1]))
        starts = lo + (hi - lo) * qmc.Halton(d=r.size, scramble=False).random(multistarts)
        for x0 in starts:
            x, res = _projected_gradient(Q, r, lo, hi, x0, step, tol, max_iter)
            if res <= tol:
                cands.append((x, agg.cost(x)))
        if r.size <= face_limit:
            cands.extend((x, agg.cost(x)) for x in _face_points(Q, r, lo, hi, tol))
    kept = _dedup(cands, dedup_radius)
    if not kept:
        return StationarySet(np.empty((0, r.size)), np.empty(0), agg.t_z, tol, dedup_radius)
    return StationarySet(
        np.array([p for p, _ in kept]), np.array([c for _, c in kept]), agg.t_z, tol, dedup_radius
    )


def nearest_stationary(sset: StationarySet, x: np.ndarray) -> tuple[np.ndarray, float]:
    """Closest stored point; among near-ties the lowest cost wins, then lexicographic order."""
    if len(sset) == 0:
        raise OracleError("stationary set is empty")
    d = np.linalg.norm(sset.points - np.asarray(x, dtype=float), axis=1)
    ties = np.flatnonzero(d <= d.min() + sset.dedup_radius)
    best = min(ties, key=lambda j: (sset.costs[j], tuple(sset.points[j])))
    return sset.points[best], float(sset.costs[best])


def sampled_minimizer(qp: TimeVaryingQP, t: float, tol: float = 1e-10) -> tuple[np.ndarray, float]:
    """x*(t) and f*(t) of the synchronously sampled problem (offset included)."""
    x, f = solve_strongly_convex(qp.Q(t), qp.r(t), qp.box, tol)
    return x, f + qp.value_offset


# -- L2 distances ----------------------------------------------------------------


def _poly(A: np.ndarray, b: np.ndarray, c: float) -> dict[tuple[int, ...], float]:
    """Monomial coefficients of x'Ax + b'x + c, keyed by exponent vectors."""
    n = b.size
    p: dict[tuple[int, ...], float] = defaultdict(float)
    p[(0,) * n] += float(c)
    for i in range(n):
        e = [0] * n
        e[i] = 1
        p[tuple(e)] += float(b[i])
    for i in range(n):
        for j in range(n):
            e = [0] * n
            e[i] += 1
            e[j] += 1
            p[tuple(e)] += float(A[i, j])
    return p


def l2_distance_squared(A1, b1, c1, A2, b2, c2, box: Box) -> float:
    """Exact integral over the box of (q1 - q2)^2 for q(x) = x'Ax + b'x + c."""
    A = np.asarray(A1, dtype=float) - np.asarray(A2, dtype=float)
    b = np.asarray(b1, dtype=float) - np.asarray(b2, dtype=float)
    c = float(c1) - float(c2)
    n = b.size
    if A.shape != (n, n) or box.n != n:
        raise PreconditionError("quadratics and box must share a dimension")
    d = {e: v for e, v in _poly(A, b, c).items() if v != 0.0}
    lo, hi = box.lo, box.hi
    p = np.arange(5)
    # mean of x_j^p over [lo_j, hi_j], p = 0..4
    moments = (hi[:, None] ** (p + 1) - lo[:, None] ** (p + 1)) / ((p + 1) * (hi - lo)[:, None])
    items = list(d.items())
    total = 0.0
    for e1, v1 in items:
        for e2, v2 in items:
            total += v1 * v2 * float(np.prod(moments[np.arange(n), np.add(e1, e2)]))
    return box.volume * total


# -- empirical constants -------------------------------------------------------------


def estimate_error_bound_constant(
    agg: AggregateObjective, box: Box, sset: StationarySet, samples=1000, seed: int | None = 0
) -> tuple[float, np.ndarray | None]:
    """max over sample points of dist(x, stationary set) / fixed-point residual.

    Points with residual below 1e-12 are skipped; with no usable point the
    result is 0 (a sentinel, with a warning).
    """
    if len(sset) == 0:
        raise OracleError("stationary set is empty")
    if np.ndim(samples) == 0:
        X = box.sample(np.random.default_rng(seed), int(samples))
    else:
        X = np.atleast_2d(np.asarray(samples, dtype=float))
    G = X @ agg.q_sym.T + agg.r_hat
    res = np.linalg.norm(X - np.clip(X - G, box.lo, box.hi), axis=1)
    dist = np.min(np.linalg.norm(X[:, None, :] - sset.points[None, :, :], axis=2), axis=1)
    ok = res >= 1e-12
    if not ok.any():
        warnings.warn("no sample point with a nonzero residual; error bound estimate is 0")
        return 0.0, None
    ratio = np.where(ok, dist / np.where(ok, res, 1.0), -np.inf)
    j = int(np.argmax(ratio))
    return float(ratio[j]), X[j]


def estimate_separation(sset: StationarySet) -> float:
    """Smallest distance between stationary points whose costs differ by more than 1e-9."""
    best = np.inf
    for a in range(len(sset)):
        for b in range(a + 1, len(sset)):
            if abs(sset.costs[a] - sset.costs[b]) > 1e-9:
                best = min(best, float(np.linalg.norm(sset.points[a] - sset.points[b])))
    return best


def estimate_sigma(s_prev: StationarySet, s_next: StationarySet, d_X: float) -> float:
    """Largest cross distance between consecutive stationary sets, capped at d_X."""
    if len(s_prev) == 0 or len(s_next) == 0:
        raise OracleError("stationary set is empty")
    d = np.linalg.norm(s_prev.points[:, None, :] - s_next.points[None, :, :], axis=2)
    return float(min(d.max(), d_X))
