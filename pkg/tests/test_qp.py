"""Control-filter constraint rows and the dual active-set solver."""
import math
import random

import numpy as np
import pytest
from hypothesis import given, strategies as st

from swarmmix.core import RobotState, WorldConfig
from swarmmix.qp import (
    ConstraintRow,
    QpProblem,
    QpStatus,
    RowKind,
    assemble_qp,
    connectivity_row,
    dump_qp,
    perturbation,
    reference_solve,
    safety_prune_cutoff,
    safety_row,
    solve_qp,
    velocity_rows,
)


def _row_matrix(problem):
    """Dense (G, h) for a QpProblem, variables flattened robot-major."""
    G = np.zeros((len(problem.rows), 2 * problem.n))
    h = np.zeros(len(problem.rows))
    for r, row in enumerate(problem.rows):
        for idx, (gx, gy) in row.coeffs:
            G[r, 2 * idx] = gx
            G[r, 2 * idx + 1] = gy
        h[r] = row.bound
    return G, h


# --- constraint rows --------------------------------------------------------

def test_safety_row_worked_example():
    row = safety_row(0, 1, (0.0, 0.0), (0.9, 0.0), 1.0, 0.1)
    coeffs = dict(row.coeffs)
    assert row.kind is RowKind.SAFETY
    assert coeffs[0][0] == pytest.approx(1.8)
    assert coeffs[1][0] == pytest.approx(-1.8)
    assert coeffs[0][1] == coeffs[1][1] == 0.0
    assert row.bound == pytest.approx(0.80)


def test_connectivity_row_worked_example():
    row = connectivity_row(0, 1, (0.0, 0.0), (0.9, 0.0), 1.0, 1.0)
    coeffs = dict(row.coeffs)
    assert row.kind is RowKind.CONNECTIVITY
    assert coeffs[0][0] == pytest.approx(-1.8)
    assert coeffs[1][0] == pytest.approx(1.8)
    assert row.bound == pytest.approx(0.19)


def test_connectivity_margin_tightens_the_bound():
    plain = connectivity_row(0, 1, (0.0, 0.0), (0.9, 0.0), 1.0, 1.0)
    tight = connectivity_row(0, 1, (0.0, 0.0), (0.9, 0.0), 1.0, 1.0, margin=0.04)
    assert tight.bound == pytest.approx(plain.bound - 0.04)
    assert tight.coeffs == plain.coeffs


def test_velocity_rows_clip_the_speed_limit():
    rows = velocity_rows(0, 1.0, 8)
    assert len(rows) == 8
    # A control at full speed along the first facet normal exceeds its bound.
    lhs = rows[0].coeffs[0][1][0] * 1.0 + rows[0].coeffs[0][1][1] * 0.0
    assert lhs > rows[0].bound
    assert rows[0].bound == pytest.approx(math.cos(math.pi / 8))


def test_velocity_rows_square_for_four_facets():
    rows = velocity_rows(2, 2.0, 4)
    assert all(r.i == 2 and r.kind is RowKind.VELOCITY for r in rows)
    assert all(r.bound == pytest.approx(2.0 * math.cos(math.pi / 4)) for r in rows)
    normals = sorted((round(r.coeffs[0][1][0], 12), round(r.coeffs[0][1][1], 12))
                     for r in rows)
    assert normals == [(-1.0, -0.0), (-0.0, -1.0), (0.0, 1.0), (1.0, 0.0)]


def test_velocity_rows_need_four_facets():
    with pytest.raises(ValueError, match="at least 4 facets"):
        velocity_rows(0, 1.0, 3)


@given(theta=st.floats(0.0, 2.0 * math.pi), facets=st.sampled_from([4, 6, 8, 12]),
       limit=st.floats(0.1, 3.0))
def test_velocity_polygon_inscribes_the_speed_disc(theta, facets, limit):
    """Max feasible speed along any direction sits between limit*cos(pi/f) and limit."""
    rows = velocity_rows(0, limit, facets)
    d = np.array([math.cos(theta), math.sin(theta)])
    reach = min(r.bound / max(np.dot(np.array(r.coeffs[0][1]), d), 1e-15)
                for r in rows if np.dot(np.array(r.coeffs[0][1]), d) > 0)
    assert reach <= limit + 1e-9
    assert reach >= limit * math.cos(math.pi / facets) - 1e-9


# --- assembly ---------------------------------------------------------------

def _pair():
    config = WorldConfig(comm_radius=1.0, safe_radius=0.1, qp_facets=8)
    robots = [RobotState(0, (0.0, 0.0)), RobotState(1, (0.9, 0.0))]
    return robots, config


def test_assemble_two_robot_row_count():
    robots, config = _pair()
    problem = assemble_qp(robots, np.zeros((2, 2)), [(0, 1)], config)
    kinds = [r.kind for r in problem.rows]
    assert kinds.count(RowKind.SAFETY) == 1
    assert kinds.count(RowKind.CONNECTIVITY) == 1
    assert kinds.count(RowKind.VELOCITY) == 2 * config.qp_facets


def test_assemble_chain_row_count():
    config = WorldConfig(comm_radius=1.0, safe_radius=0.1, qp_facets=8)
    robots = [RobotState(i, (0.7 * i, 0.0)) for i in range(3)]
    problem = assemble_qp(robots, np.zeros((3, 2)), [(0, 1), (1, 2)], config,
                          prune=False)
    kinds = [r.kind for r in problem.rows]
    assert kinds.count(RowKind.SAFETY) == 3
    assert kinds.count(RowKind.CONNECTIVITY) == 2
    assert kinds.count(RowKind.VELOCITY) == 3 * config.qp_facets


def test_margin_follows_step_size():
    robots, config = _pair()
    wide = assemble_qp(robots, np.zeros((2, 2)), [(0, 1)], config)
    conn = next(r for r in wide.rows if r.kind is RowKind.CONNECTIVITY)
    raw = connectivity_row(0, 1, robots[0].position, robots[1].position,
                           config.gamma, config.comm_radius)
    expected = config.dt * (robots[0].speed_limit + robots[1].speed_limit) ** 2
    assert conn.bound == pytest.approx(raw.bound - expected)


def test_prune_cutoff_is_the_breakeven_distance():
    cutoff = safety_prune_cutoff(1.0, 1.0, 0.1)
    assert cutoff == pytest.approx(2.0 + math.sqrt(4.01))
    # At the cutoff the fastest possible approach exactly saturates the bound.
    assert 4.0 * cutoff == pytest.approx(1.0 * (cutoff ** 2 - 0.1 ** 2))


def test_pruning_never_changes_the_answer():
    rng = random.Random(5)
    config = WorldConfig(comm_radius=1.0, safe_radius=0.05, qp_facets=8)
    for _ in range(20):
        robots = [RobotState(i, (rng.uniform(0, 6), rng.uniform(0, 6)))
                  for i in range(6)]
        u_nom = np.array([[rng.uniform(-1, 1), rng.uniform(-1, 1)]
                          for _ in range(6)])
        full = solve_qp(assemble_qp(robots, u_nom, [], config, prune=False))
        slim = solve_qp(assemble_qp(robots, u_nom, [], config, prune=True))
        assert full.status is QpStatus.OPTIMAL and slim.status is QpStatus.OPTIMAL
        assert np.max(np.abs(full.u_star - slim.u_star)) <= 1e-9


# --- solving ----------------------------------------------------------------

def test_unconstrained_nominal_passes_through():
    robots, config = _pair()
    u_nom = np.array([[0.05, 0.0], [0.05, 0.0]])  # drift together, slowly
    solution = solve_qp(assemble_qp(robots, u_nom, [(0, 1)], config))
    assert solution.status is QpStatus.OPTIMAL
    assert solution.active_rows == ()
    assert np.allclose(solution.u_star, u_nom.ravel())


def test_head_on_pull_at_contact_is_cancelled():
    """Two robots touching at the safe distance, commanded straight together."""
    config = WorldConfig(comm_radius=1.0, safe_radius=0.1)
    robots = [RobotState(0, (0.0, 0.0)), RobotState(1, (0.1, 0.0))]
    u_nom = np.array([[1.0, 0.0], [-1.0, 0.0]])
    solution = solve_qp(assemble_qp(robots, u_nom, [(0, 1)], config))
    assert solution.status is QpStatus.OPTIMAL
    assert np.max(np.abs(solution.u_star)) == pytest.approx(0.0, abs=1e-9)
    assert solution.active_rows  # the contact constraint is binding


def test_empty_problem_returns_nominal():
    u_nom = np.array([[0.3, -0.2]])
    solution = solve_qp(QpProblem(n=1, u_nominal=u_nom, rows=()))
    assert solution.status is QpStatus.OPTIMAL
    assert np.array_equal(solution.u_star, u_nom.ravel())


def test_unsatisfiable_zero_gradient_row_falls_back():
    row_set = velocity_rows(0, 1.0, 4)
    impossible = ConstraintRow(kind=RowKind.VELOCITY, i=0, j=0,
                               coeffs=((0, (0.0, 0.0)),), bound=-1.0)
    problem = QpProblem(n=1, u_nominal=np.array([[0.5, 0.0]]),
                        rows=tuple(row_set) + (impossible,))
    solution = solve_qp(problem)
    assert solution.status is QpStatus.FELL_BACK_TO_ZERO
    assert np.array_equal(solution.u_star, np.zeros(2))
    assert "zero-gradient" in solution.diagnostics


def _random_problem(rng, n=4):
    """Separated robots on a chain, wide comm disc: always feasible."""
    config = WorldConfig(comm_radius=2.9, safe_radius=0.1,
                         gamma=rng.uniform(0.5, 2.0),
                         qp_facets=rng.choice([4, 6, 8]))
    robots = []
    while len(robots) < n:
        p = (rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2))
        if all((p[0] - q.position[0]) ** 2 + (p[1] - q.position[1]) ** 2
               > (2 * config.safe_radius) ** 2 for q in robots):
            robots.append(RobotState(len(robots), p,
                                     speed_limit=rng.uniform(0.5, 1.5)))
    u_nom = np.array([[rng.uniform(-2, 2), rng.uniform(-2, 2)]
                      for _ in range(n)])
    enforced = [(i, i + 1) for i in range(n - 1)]
    return assemble_qp(robots, u_nom, enforced, config)


def test_solver_agrees_with_first_order_reference():
    rng = random.Random(12)
    for _ in range(60):
        problem = _random_problem(rng)
        fast = solve_qp(problem)
        assert fast.status is QpStatus.OPTIMAL
        assert fast.kkt_residual <= 1e-8
        ref = reference_solve(problem)
        assert isinstance(ref, np.ndarray)
        assert np.max(np.abs(fast.u_star - ref)) <= 1e-6


def test_solution_is_the_nearest_feasible_control():
    rng = random.Random(77)
    problem = _random_problem(rng)
    solution = solve_qp(problem)
    assert solution.status is QpStatus.OPTIMAL
    G, h = _row_matrix(problem)
    u_nom = np.asarray(problem.u_nominal).ravel()
    best = float(np.sum((solution.u_star.ravel() - u_nom) ** 2))
    hits = 0
    for _ in range(2000):
        v = np.array([rng.uniform(-1.5, 1.5) for _ in range(2 * problem.n)])
        if np.all(G @ v <= h + 1e-12):
            hits += 1
            assert best <= float(np.sum((v - u_nom) ** 2)) + 1e-9
    assert hits > 0  # the sampler actually found feasible competitors


def test_solution_satisfies_every_row():
    rng = random.Random(13)
    for _ in range(20):
        problem = _random_problem(rng, n=4)
        solution = solve_qp(problem)
        G, h = _row_matrix(problem)
        assert np.all(G @ solution.u_star.ravel() <= h + 1e-8)


# --- bookkeeping ------------------------------------------------------------

def test_perturbation_single_robot():
    assert perturbation(np.array([[0.3, 0.4]]), np.zeros((1, 2))) == pytest.approx(0.25)


def test_perturbation_averages_over_robots():
    u_star = np.array([[1.0, 0.0], [0.0, 1.0]])
    assert perturbation(u_star, np.zeros((2, 2))) == pytest.approx(1.0)


def test_dump_qp_layout():
    robots, config = _pair()
    problem = assemble_qp(robots, np.array([[0.25, 0.5], [0.0, 0.0]]),
                          [(0, 1)], config)
    lines = dump_qp(problem).splitlines()
    assert lines[0].startswith("nominal 0.25 0.5 0 0")
    assert len(lines) == 1 + len(problem.rows)
    kinds = {line.split()[0] for line in lines[1:]}
    assert kinds == {"safety", "connectivity", "velocity"}
    assert all(len(line.split()) == 8 for line in lines[1:])
