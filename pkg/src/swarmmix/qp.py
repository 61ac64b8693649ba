"""Minimally invasive control revision as a quadratic program.

Each step solves  min ||u - u_nom||^2  over the stacked team control
u in R^(2n), subject to linear one-sided rows:

  safety        -2 (xi-xj).(ui-uj) <= gamma * h_safety        (every pair)
  connectivity  +2 (xi-xj).(ui-uj) <= gamma * h_connectivity  (enforced links)
  velocity      d_k . ui <= a_i cos(pi/f)                     (f polygon facets)

The velocity rows are an inner polygonal approximation of ||ui|| <= a_i
(vertices of the polygon lie exactly on the a_i circle).  The solver is a
dual active-set method specialized to the identity Hessian; an independent
projected-gradient reference solver doubles as the test oracle.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import RobotState, WorldConfig
from .graph import Edge, h_connectivity, h_safety

__all__ = [
    "RowKind",
    "ConstraintRow",
    "QpProblem",
    "QpStatus",
    "QpSolution",
    "safety_row",
    "connectivity_row",
    "velocity_rows",
    "safety_prune_cutoff",
    "assemble_qp",
    "solve_qp",
    "reference_solve",
    "perturbation",
    "dump_qp",
]


class RowKind(Enum):
    SAFETY = "safety"
    CONNECTIVITY = "connectivity"
    VELOCITY = "velocity"


@dataclass(frozen=True)
class ConstraintRow:
    """One half-space  sum_i coeffs[i] . u_i <= bound  over the stacked control."""

    kind: RowKind
    i: int
    j: int  # second robot, or facet index for velocity rows
    coeffs: tuple[tuple[int, tuple[float, float]], ...]
    bound: float


@dataclass(frozen=True)
class QpProblem:
    n: int
    u_nominal: np.ndarray  # shape (2n,)
    rows: tuple[ConstraintRow, ...]


class QpStatus(Enum):
    OPTIMAL = "Optimal"
    FELL_BACK_TO_ZERO = "FellBackToZero"


@dataclass(frozen=True)
class QpSolution:
    u_star: np.ndarray  # shape (2n,)
    status: QpStatus
    active_rows: tuple[int, ...]
    kkt_residual: float
    iterations: int
    diagnostics: str = ""


# --- row builders -----------------------------------------------------------

def safety_row(i: int, j: int, xi: Sequence[float], xj: Sequence[float],
               gamma: float, safe_radius: float) -> ConstraintRow:
    """Keep pair (i, j) at least the safe radius apart: -2 dx.(ui-uj) <= gamma h_s."""
    dx = (xi[0] - xj[0], xi[1] - xj[1])
    return ConstraintRow(
        kind=RowKind.SAFETY, i=i, j=j,
        coeffs=((i, (-2.0 * dx[0], -2.0 * dx[1])), (j, (2.0 * dx[0], 2.0 * dx[1]))),
        bound=gamma * h_safety(xi, xj, safe_radius),
    )


def connectivity_row(i: int, j: int, xi: Sequence[float], xj: Sequence[float],
                     gamma: float, comm_radius: float, margin: float = 0.0) -> ConstraintRow:
    """Keep an enforced link within comm range: +2 dx.(ui-uj) <= gamma h_c - margin."""
    dx = (xi[0] - xj[0], xi[1] - xj[1])
    return ConstraintRow(
        kind=RowKind.CONNECTIVITY, i=i, j=j,
        coeffs=((i, (2.0 * dx[0], 2.0 * dx[1])), (j, (-2.0 * dx[0], -2.0 * dx[1]))),
        bound=gamma * h_connectivity(xi, xj, comm_radius) - margin,
    )


def velocity_rows(i: int, speed_limit: float, facets: int) -> list[ConstraintRow]:
    """Inner regular polygon for ||u_i|| <= speed_limit.

    Facet normals point along 2*pi*k/facets; the common bound
    speed_limit*cos(pi/facets) puts the polygon vertices on the limit circle.
    """
    if facets < 4:
        raise ValueError("need at least 4 facets")
    bound = speed_limit * math.cos(math.pi / facets)
    rows = []
    for k in range(facets):
        ang = 2.0 * math.pi * k / facets
        rows.append(ConstraintRow(
            kind=RowKind.VELOCITY, i=i, j=k,
            coeffs=((i, (math.cos(ang), math.sin(ang))),),
            bound=bound,
        ))
    return rows


def safety_prune_cutoff(alpha_max: float, gamma: float, safe_radius: float) -> float:
    """Distance beyond which a safety row is slack for every speed-feasible control.

    The row's left side is at most 4 d alpha_max while its bound is
    gamma (d^2 - R_s^2); the positive root of gamma d^2 - 4 alpha_max d -
    gamma R_s^2 bounds where the row could possibly bind, so rows for pairs
    beyond it can be dropped without changing the optimum.
    """
    disc = 4.0 * alpha_max * alpha_max + gamma * gamma * safe_radius * safe_radius
    return (2.0 * alpha_max + math.sqrt(disc)) / gamma


def assemble_qp(robots: Sequence[RobotState], u_nominal: np.ndarray,
                enforced_edges: Iterable[Edge], config: WorldConfig,
                prune: Optional[bool] = None) -> QpProblem:
    """Stack safety rows (all pairs, optionally pruned), connectivity rows for
    each enforced edge, and velocity facets for each robot.

    With ``config.discrete_margin`` each connectivity bound is tightened by
    dt*(a_i+a_j)^2, which makes one Euler step provably stay inside the
    connectivity set; safety rows need no tightening (the second-order term
    only helps there).
    """
    n = len(robots)
    u_nominal = np.asarray(u_nominal, dtype=float).reshape(2 * n)
    if prune is None:
        prune = config.qp_prune
    rows: list[ConstraintRow] = []
    alpha_max = max(r.speed_limit for r in robots)
    cutoff_sq = safety_prune_cutoff(alpha_max, config.gamma, config.safe_radius) ** 2
    for j in range(n):
        xj = robots[j].position
        for i in range(j + 1, n):
            xi = robots[i].position
            d2 = (xi[0] - xj[0]) ** 2 + (xi[1] - xj[1]) ** 2
            if prune and d2 > cutoff_sq:
                continue
            rows.append(safety_row(i, j, xi, xj, config.gamma, config.safe_radius))
    for (i, j) in sorted(enforced_edges):
        margin = 0.0
        if config.discrete_margin:
            margin = config.dt * (robots[i].speed_limit + robots[j].speed_limit) ** 2
        rows.append(connectivity_row(i, j, robots[i].position, robots[j].position,
                                     config.gamma, config.comm_radius, margin))
    for i in range(n):
        rows.extend(velocity_rows(i, robots[i].speed_limit, config.qp_facets))
    return QpProblem(n=n, u_nominal=u_nominal, rows=tuple(rows))


# --- matrices ---------------------------------------------------------------

def _matrices(problem: QpProblem) -> tuple[np.ndarray, np.ndarray]:
    m = len(problem.rows)
    G = np.zeros((m, 2 * problem.n))
    h = np.empty(m)
    for r, row in enumerate(problem.rows):
        for i, (gx, gy) in row.coeffs:
            G[r, 2 * i] += gx
            G[r, 2 * i + 1] += gy
        h[r] = row.bound
    return G, h


# --- dual active-set solver -------------------------------------------------

def solve_qp(problem: QpProblem, tol: float = 1e-8) -> QpSolution:
    """Project the nominal control onto the constraint polyhedron.

    Dual active-set iteration: pick the most violated row, move the primal
    iterate along the projection of that row's normal onto the null space
    of the active normals, and take the longest step that keeps every
    multiplier non-negative, dropping the blocking row otherwise.  When the
    new normal is dependent on the active ones only the multipliers move
    (a pure dual step); if no blocker exists there the problem is
    infeasible.  u = u_nom - G' mu stays exact on the active face
    throughout.  Budget is 50 rows' worth of iterations; on infeasibility
    or non-convergence the certified fallback u = 0 is returned (safe
    whenever the current state satisfies every h >= 0).
    """
    u_nom = np.asarray(problem.u_nominal, dtype=float).reshape(2 * problem.n)
    m = len(problem.rows)
    if m == 0:
        return QpSolution(u_star=u_nom.copy(), status=QpStatus.OPTIMAL,
                          active_rows=(), kkt_residual=0.0, iterations=0)
    G, h = _matrices(problem)

    # Rows with a zero gradient constrain nothing: satisfied ones are dropped,
    # an unsatisfiable one (0 <= h < 0) certifies infeasibility outright.
    norms = np.linalg.norm(G, axis=1)
    zero_rows = np.flatnonzero(norms <= 1e-14)
    for r in zero_rows:
        if h[r] < -tol:
            return _fallback(problem, f"infeasible zero-gradient row {r} (bound {h[r]:.3e})")
    live = np.flatnonzero(norms > 1e-14)
    if len(live) == 0:
        return QpSolution(u_star=u_nom.copy(), status=QpStatus.OPTIMAL,
                          active_rows=(), kkt_residual=0.0, iterations=0)
    Gl, hl = G[live], h[live]

    x = u_nom.copy()
    active: list[int] = []       # indices into live rows
    mu_active: list[float] = []
    budget = 50 * m
    it = 0
    while True:
        it += 1
        if it > budget:
            return _fallback(problem, f"iteration budget {budget} exhausted")
        slack = Gl @ x - hl
        if active:
            slack[np.array(active)] = 0.0   # tight by construction, clear drift
        k = int(np.argmax(slack))
        if slack[k] <= tol:
            break
        mu_k = 0.0
        # Bring row k into the active face, dropping blockers on the way.
        while True:
            it += 1
            if it > budget:
                return _fallback(problem, f"iteration budget {budget} exhausted")
            if active:
                GA = Gl[np.array(active)]
                M = GA @ GA.T
                rhs = GA @ Gl[k]
                try:
                    # Active rows are kept linearly independent (dependent
                    # candidates only ever take the pure dual step below),
                    # so M is symmetric positive definite.
                    r = np.linalg.solve(M, rhs)
                except np.linalg.LinAlgError:
                    r, *_ = np.linalg.lstsq(M, rhs, rcond=None)
                z = Gl[k] - GA.T @ r
            else:
                r = np.zeros(0)
                z = Gl[k].copy()
            znorm2 = float(z @ z)
            gknorm2 = float(Gl[k] @ Gl[k])
            s = float(Gl[k] @ x - hl[k])
            if s <= tol:
                if mu_k > 0.0:
                    active.append(k)
                    mu_active.append(mu_k)
                break
            # Longest dual step before an active multiplier hits zero.
            t1 = math.inf
            blocker = -1
            for idx, rj in enumerate(r):
                if rj > 1e-12:
                    cand = mu_active[idx] / rj
                    if cand < t1 - 1e-15:
                        t1 = cand
                        blocker = idx
            if znorm2 > 1e-12 * gknorm2:
                t2 = s / znorm2
                t = min(t1, t2)
                x -= t * z
                for idx in range(len(active)):
                    mu_active[idx] -= t * r[idx]
                mu_k += t
                if t2 <= t1:
                    active.append(k)
                    mu_active.append(mu_k)
                    break
            else:
                # Row k is dependent on the active normals and cannot be
                # reached by primal motion; take a pure dual step.
                if blocker < 0:
                    return _fallback(problem, "infeasible (dual ray found)")
                t = t1
                for idx in range(len(active)):
                    mu_active[idx] -= t * r[idx]
                mu_k += t
            del mu_active[blocker]
            del active[blocker]

    mu_live = np.zeros(len(live))
    for idx, a in enumerate(active):
        mu_live[a] = max(mu_active[idx], 0.0)
    u = u_nom - Gl.T @ mu_live
    residual = _kkt_residual(G, h, u_nom, u, _full_mu(m, live, mu_live))
    if residual > max(tol, 1e-8) * 10:
        return _fallback(problem, f"KKT residual {residual:.3e} above tolerance")
    active_rows = tuple(int(live[a]) for a in sorted(a for a, v in zip(active, mu_active)
                                                     if v > 1e-10))
    return QpSolution(u_star=u, status=QpStatus.OPTIMAL, active_rows=active_rows,
                      kkt_residual=residual, iterations=it)


def _full_mu(m: int, live: np.ndarray, mu_live: np.ndarray) -> np.ndarray:
    mu = np.zeros(m)
    mu[live] = mu_live
    return mu


def _fallback(problem: QpProblem, reason: str) -> QpSolution:
    u0 = np.zeros(2 * problem.n)
    G, h = _matrices(problem)
    residual = float(np.max(np.concatenate([G @ u0 - h, [0.0]])))
    return QpSolution(u_star=u0, status=QpStatus.FELL_BACK_TO_ZERO, active_rows=(),
                      kkt_residual=max(residual, 0.0), iterations=0, diagnostics=reason)


def _kkt_residual(G: np.ndarray, h: np.ndarray, u_nom: np.ndarray,
                  u: np.ndarray, mu: np.ndarray) -> float:
    """Max of stationarity, primal/dual feasibility, and complementarity residuals."""
    slack = G @ u - h
    stationarity = np.max(np.abs((u - u_nom) + G.T @ mu)) if mu.size else 0.0
    primal = float(np.max(slack)) if slack.size else 0.0
    dual = float(np.max(-mu)) if mu.size else 0.0
    comp = float(np.max(np.abs(mu * slack))) if mu.size else 0.0
    return max(float(stationarity), primal, dual, comp, 0.0)


def perturbation(u_star: np.ndarray, u_nominal: np.ndarray) -> float:
    """Mean squared deviation per robot: (1/n) sum_i ||u*_i - u_nom_i||^2."""
    du = np.asarray(u_star, float).ravel() - np.asarray(u_nominal, float).ravel()
    n = du.size // 2
    return float(du @ du / n)


# --- projected-gradient reference solver ------------------------------------

def reference_solve(problem: QpProblem, max_iters: int = 200_000,
                    tol: float = 1e-12) -> np.ndarray:
    """Accelerated projected gradient on the dual; independent oracle for solve_qp.

    Runs FISTA on  min_{mu>=0} 1/2 mu' M mu - q' mu  with exact step 1/L,
    L the largest eigenvalue of M = G G'.  Slow but simple; only meant for
    small test instances.
    """
    u_nom = np.asarray(problem.u_nominal, dtype=float).reshape(2 * problem.n)
    if not problem.rows:
        return u_nom.copy()
    G, h = _matrices(problem)
    norms = np.linalg.norm(G, axis=1)
    live = np.flatnonzero(norms > 1e-14)
    G, h = G[live], h[live]
    M = G @ G.T
    L = float(np.max(np.linalg.eigvalsh(M))) if M.size else 0.0
    if L <= 0.0:
        return u_nom.copy()
    q = G @ u_nom - h
    mu = np.zeros(len(live))
    y = mu.copy()
    t = 1.0
    u_prev = u_nom - G.T @ mu
    for k in range(max_iters):
        grad = M @ y - q
        mu_next = np.maximum(0.0, y - grad / L)
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        y = mu_next + ((t - 1.0) / t_next) * (mu_next - mu)
        mu, t = mu_next, t_next
        if k % 64 == 0:
            u = u_nom - G.T @ mu
            if np.max(np.abs(u - u_prev)) < tol and np.max(G @ u - h) < 1e-10:
                return u
            u_prev = u
    return u_nom - G.T @ mu


# --- debug dump -------------------------------------------------------------

def dump_qp(problem: QpProblem) -> str:
    """Text form: nominal control line, then one line per row
    ``kind i j gx_i gy_i gx_j gy_j bound`` (velocity rows use the facet slot for j)."""
    fmt = "%.17g"
    parts = ["nominal " + " ".join(fmt % v for v in np.asarray(problem.u_nominal).ravel())]
    for row in problem.rows:
        by_robot = dict(row.coeffs)
        gi = by_robot.get(row.i, (0.0, 0.0))
        gj = by_robot.get(row.j, (0.0, 0.0)) if row.kind != RowKind.VELOCITY else (0.0, 0.0)
        parts.append(" ".join([
            row.kind.value, str(row.i), str(row.j),
            fmt % gi[0], fmt % gi[1], fmt % gj[0], fmt % gj[1], fmt % row.bound,
        ]))
    return "\n".join(parts) + "\n"
