"""Closed-loop team simulator.

Each step: evaluate nominal behaviors, rebuild the proximity graph, choose
the enforced link set for the active connectivity mode, revise the stacked
control through the QP, and Euler-integrate.  The two tree modes recompute
the constrained spanning tree every step (by message passing or centrally —
the results are identical by construction); the two fixed modes freeze their
link set at t=0 and fail hard if one of those links is ever stretched past
the comm radius.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np

from .behaviors import BehaviorAssignment, assignment_from_scenario, nominal_controls, robot_target
from .core import RobotState, Scenario, SingleIntegrator, Unicycle, WorldConfig
from .graph import (CommGraph, Edge, SpanningTreeEdges, algebraic_connectivity,
                    build_comm_graph, induced_subgraph_connected, is_connected,
                    kruskal_mccst)
from .protocol import DeliveryPolicy, ImmediateFifo, run_protocol
from .qp import QpSolution, QpStatus, assemble_qp, perturbation, solve_qp

__all__ = [
    "ConnectivityMode",
    "World",
    "StepReport",
    "RunResult",
    "SimulationError",
    "world_from_scenario",
    "unicycle_map",
    "step",
    "compute_metrics",
    "run",
]

STALL_SPEED = 1e-4
STALL_WINDOW = 100


class SimulationError(RuntimeError):
    """A mode certificate was violated (e.g. a frozen link left comm range)."""


class ConnectivityMode(Enum):
    DISTRIBUTED_MCCST = "mccst"
    CENTRALIZED_MCCST = "centralized"
    FIXED_INITIAL_MST = "fixed-mst"
    FIXED_INITIAL_GRAPH = "fixed-graph"


@dataclass(frozen=True)
class World:
    robots: tuple[RobotState, ...]
    config: WorldConfig
    assignment: BehaviorAssignment
    mode: ConnectivityMode
    time: float = 0.0
    enforced_edges: Optional[frozenset[Edge]] = None  # fixed modes only
    policy: DeliveryPolicy = field(default_factory=ImmediateFifo)


@dataclass(frozen=True)
class StepReport:
    time: float
    min_pair_distance: float
    lambda2: float
    subgroup_connected: tuple[bool, ...]
    perturbation: float
    mean_dist_to_target: float
    protocol_messages: int
    qp_status: str


@dataclass(frozen=True)
class RunResult:
    reports: tuple[StepReport, ...]
    world: World
    stalled_at: Optional[int]


def world_from_scenario(scenario: Scenario, mode: ConnectivityMode,
                        policy: DeliveryPolicy = ImmediateFifo()) -> World:
    world = World(robots=scenario.robots, config=scenario.config,
                  assignment=assignment_from_scenario(scenario), mode=mode,
                  policy=policy)
    if mode in (ConnectivityMode.FIXED_INITIAL_MST, ConnectivityMode.FIXED_INITIAL_GRAPH):
        graph = _graph_now(world)
        if mode is ConnectivityMode.FIXED_INITIAL_MST:
            edges = kruskal_mccst(graph).edges
        else:
            edges = frozenset(graph.edges)
        world = replace(world, enforced_edges=edges)
    return world


def _positions(world: World) -> np.ndarray:
    return np.array([r.position for r in world.robots], dtype=float)


def _graph_now(world: World, u_nom: Optional[np.ndarray] = None) -> CommGraph:
    if u_nom is None:
        u_nom = nominal_controls(_positions(world),
                                 [r.speed_limit for r in world.robots], world.assignment)
    return build_comm_graph(world.robots, world.config, u_nom)


def unicycle_map(u: Sequence[float], heading: float, lookahead: float) -> tuple[float, float]:
    """Map a planar velocity command to (v, omega) for a unicycle whose
    look-ahead point (at distance ``lookahead`` ahead) should track it."""
    c, s = math.cos(heading), math.sin(heading)
    v = c * u[0] + s * u[1]
    omega = (-s * u[0] + c * u[1]) / lookahead
    return v, omega


def _integrate(world: World, u_star: np.ndarray) -> tuple[RobotState, ...]:
    dt = world.config.dt
    dyn = world.config.dynamics
    new_robots = []
    for i, r in enumerate(world.robots):
        ux, uy = float(u_star[2 * i]), float(u_star[2 * i + 1])
        px, py = r.position
        if isinstance(dyn, Unicycle):
            # The tracked position is the look-ahead point, which follows the
            # planar command exactly; the heading integrates the mapped omega.
            _, omega = unicycle_map((ux, uy), r.heading, dyn.lookahead)
            heading = r.heading + dt * omega
        else:
            heading = r.heading
        new_robots.append(replace(r, position=(px + dt * ux, py + dt * uy),
                                  heading=heading))
    return tuple(new_robots)


def _plan(world: World) -> tuple[np.ndarray, frozenset[Edge], QpSolution, int]:
    """Nominal controls, enforced link set, and the revised-control QP solve."""
    positions = _positions(world)
    limits = [r.speed_limit for r in world.robots]
    u_nom = nominal_controls(positions, limits, world.assignment)
    graph = build_comm_graph(world.robots, world.config, u_nom)

    messages = 0
    if world.mode is ConnectivityMode.DISTRIBUTED_MCCST:
        tree, stats = run_protocol(graph, world.policy)
        enforced = tree.edges
        messages = stats.messages
    elif world.mode is ConnectivityMode.CENTRALIZED_MCCST:
        enforced = kruskal_mccst(graph).edges
    else:
        assert world.enforced_edges is not None
        present = set(graph.edges)
        for e in sorted(world.enforced_edges):
            if e not in present:
                raise SimulationError(
                    f"fixed link {e} exceeded the comm radius at t={world.time:.3f}")
        enforced = world.enforced_edges

    problem = assemble_qp(world.robots, u_nom.reshape(-1), enforced, world.config)
    solution = solve_qp(problem, world.config.qp_tolerance)
    return u_nom, enforced, solution, messages


def step(world: World) -> tuple[World, StepReport]:
    """Advance one control period and report the post-step metrics."""
    u_nom, _, solution, messages = _plan(world)
    new_robots = _integrate(world, solution.u_star)
    new_world = replace(world, robots=new_robots, time=world.time + world.config.dt)
    report = compute_metrics(new_world, u_nom, solution, messages)
    return new_world, report


def compute_metrics(world: World, u_nom: np.ndarray, solution: QpSolution,
                    messages: int) -> StepReport:
    positions = _positions(world)
    n = len(world.robots)
    if n >= 2:
        diffs = positions[:, None, :] - positions[None, :, :]
        dists = np.sqrt((diffs ** 2).sum(axis=2))
        min_dist = float(dists[np.triu_indices(n, k=1)].min())
    else:
        min_dist = math.inf
    graph = _graph_now(world)
    lam2 = algebraic_connectivity(graph) if n >= 2 else math.inf
    groups = sorted(set(graph.subgroups))
    sub_conn = tuple(induced_subgraph_connected(graph, g) for g in groups)
    targets = np.array([robot_target(world.assignment, r.id) for r in world.robots])
    mean_dist = float(np.linalg.norm(positions - targets, axis=1).mean())
    return StepReport(
        time=world.time,
        min_pair_distance=min_dist,
        lambda2=lam2,
        subgroup_connected=sub_conn,
        perturbation=perturbation(solution.u_star, u_nom.reshape(-1)),
        mean_dist_to_target=mean_dist,
        protocol_messages=messages,
        qp_status=solution.status.value,
    )


def run(scenario: Scenario, mode: ConnectivityMode,
        steps: Optional[int] = None,
        policy: DeliveryPolicy = ImmediateFifo(),
        observer: Optional[Callable[[int, World, np.ndarray, QpSolution], None]] = None,
        ) -> RunResult:
    """Run the closed loop for ``steps`` periods (scenario default otherwise).

    ``observer`` (if given) is called before each state update with the step
    index, the pre-step world, the nominal controls, and the QP solution, so
    callers can log full trajectories without re-deriving them.  Detects
    stalls (mean displacement speed below 1e-4 for 100 consecutive steps) as
    a diagnostic; a stalled run still completes.
    """
    world = world_from_scenario(scenario, mode, policy)
    count = scenario.step_count if steps is None else steps
    reports = []
    stalled_at: Optional[int] = None
    slow_streak = 0
    prev = _positions(world)
    for k in range(count):
        u_nom, _, solution, messages = _plan(world)
        if observer is not None:
            observer(k, world, u_nom, solution)
        new_robots = _integrate(world, solution.u_star)
        world = replace(world, robots=new_robots,
                        time=world.time + world.config.dt)
        report = compute_metrics(world, u_nom, solution, messages)
        reports.append(report)
        cur = _positions(world)
        speed = float(np.linalg.norm(cur - prev, axis=1).mean()) / world.config.dt
        prev = cur
        if speed < STALL_SPEED:
            slow_streak += 1
            if slow_streak >= STALL_WINDOW and stalled_at is None:
                stalled_at = k
        else:
            slow_streak = 0
    return RunResult(reports=tuple(reports), world=world, stalled_at=stalled_at)
