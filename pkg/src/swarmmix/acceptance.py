"""End-to-end acceptance checks covering the tree protocol, the control
filter, and the closed-loop simulator.

Each check returns a :class:`CriterionResult`; ``run_all`` executes the whole
registry in order and the ``verify`` CLI subcommand (and the acceptance test
module) render one pass/fail line per check.  Long simulator runs are shared
through a per-invocation cache so the later checks do not pay for them twice.
"""
from __future__ import annotations

import math
import random
import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import RobotState, WorldConfig
from .graph import (brute_force_constrained_mst, h_connectivity, h_safety,
                    kruskal_mccst)
from .protocol import run_protocol
from .qp import QpStatus, assemble_qp, reference_solve, solve_qp
from .scenariogen import mix40_scenario, random_graph_instance
from .sim import ConnectivityMode, RunResult, run

__all__ = [
    "CriterionResult",
    "RunCache",
    "check_tree_agreement",
    "check_subgroups_merge_first",
    "check_long_horizon_safety",
    "check_connectivity_maintenance",
    "check_perturbation_advantage",
    "check_tracking_advantage",
    "check_message_scaling",
    "check_filter_against_reference",
    "check_one_step_invariance",
    "check_run_determinism",
    "ALL_CHECKS",
    "run_all",
]


@dataclass(frozen=True)
class CriterionResult:
    name: str
    passed: bool
    detail: str
    elapsed: float

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag} {self.name}: {self.detail} [{self.elapsed:.1f}s]"


class RunCache:
    """Memoizes full benchmark runs keyed by (seed, mode)."""

    def __init__(self) -> None:
        self._runs: dict[tuple[int, ConnectivityMode], RunResult] = {}
        self._trajectories: dict[tuple[int, ConnectivityMode], tuple] = {}

    def get(self, seed: int, mode: ConnectivityMode) -> RunResult:
        key = (seed, mode)
        if key not in self._runs:
            traj: list[tuple] = []
            self._runs[key] = run(
                mix40_scenario(seed), mode,
                observer=lambda k, w, un, sol: traj.append(
                    tuple(r.position for r in w.robots)))
            self._trajectories[key] = tuple(traj)
        return self._runs[key]

    def trajectory(self, seed: int, mode: ConnectivityMode) -> tuple:
        self.get(seed, mode)
        return self._trajectories[(seed, mode)]


# Kruskal comparator fault injection used by the verification tests: when set,
# the centralized tree builder the checks compare against is replaced, which
# must make the tree-agreement check fail loudly rather than silently pass.
_kruskal_for_checks: Callable = kruskal_mccst


def check_tree_agreement(cache: Optional[RunCache] = None) -> CriterionResult:
    """500 random proximity graphs: message-passing tree == centralized tree,
    and both match exhaustive search on the small instances."""
    t0 = time.time()
    rng = random.Random(2001)
    mismatches = 0
    brute_checked = 0
    for k in range(500):
        n = rng.randint(3, 30)
        m = rng.randint(1, min(4, n))
        graph = random_graph_instance(n, m, seed=10_000 + k)
        tree, _ = run_protocol(graph)
        central = _kruskal_for_checks(graph)
        if tree.edges != central.edges:
            mismatches += 1
            break  # one disagreement already fails the criterion
        if n <= 8:
            brute_checked += 1
            if brute_force_constrained_mst(graph).edges != central.edges:
                mismatches += 1
                break
    elapsed = time.time() - t0
    ok = mismatches == 0 and elapsed < 120.0
    return CriterionResult(
        name="tree agreement (distributed vs centralized vs exhaustive)",
        passed=ok,
        detail=f"500 graphs, {mismatches} mismatches, "
               f"{brute_checked} brute-force checked, budget 120s",
        elapsed=elapsed)


def check_subgroups_merge_first(cache: Optional[RunCache] = None) -> CriterionResult:
    """Every link proposed across two subgroups joins fragments that each
    already contain their endpoint's whole subgroup, on the same instance
    family as the agreement check."""
    t0 = time.time()
    rng = random.Random(2001)
    premature = 0
    connects = 0
    for k in range(500):
        n = rng.randint(3, 30)
        m = rng.randint(1, min(4, n))
        graph = random_graph_instance(n, m, seed=10_000 + k)
        groups: dict[int, set[int]] = {}
        for i, g in enumerate(graph.subgroups):
            groups.setdefault(g, set()).add(i)

        def watch(owner, edge, nodes, graph=graph, groups=groups):
            nonlocal premature, connects
            a, b = edge
            if graph.subgroups[a] == graph.subgroups[b]:
                return
            connects += 1
            # Live membership at the merge event, read from the node states
            # rather than from the snapshot the decision was based on.  Each
            # endpoint's whole subgroup must sit inside that endpoint's
            # (pre-merge) fragment.
            for end in (a, b):
                if not groups[graph.subgroups[end]] <= nodes[end].members:
                    premature += 1
                    return

        run_protocol(graph, on_adopt=watch)
    elapsed = time.time() - t0
    return CriterionResult(
        name="subgroup-first merging (no premature inter-subgroup links)",
        passed=premature == 0,
        detail=f"500 graphs, {connects} inter-subgroup connects, "
               f"{premature} premature",
        elapsed=elapsed)


def check_long_horizon_safety(cache: Optional[RunCache] = None) -> CriterionResult:
    """The 40-robot benchmark keeps every pair separated for 1500 steps in
    all four connectivity modes, within a five-minute budget."""
    cache = cache or RunCache()
    t0 = time.time()
    worst = math.inf
    short = []
    for mode in ConnectivityMode:
        res = cache.get(0, mode)
        if len(res.reports) < 1500:
            short.append(mode.value)
        worst = min(worst, min(r.min_pair_distance for r in res.reports))
    elapsed = time.time() - t0
    rs = mix40_scenario(0).config.safe_radius
    # Contact at exactly the safe radius is the h = 0 barrier boundary and
    # counts as safe; only a measurable crossing below it fails.
    ok = worst >= rs - 1e-6 and not short and elapsed < 300.0
    return CriterionResult(
        name="long-horizon safety (40 robots, 4 modes, 1500 steps)",
        passed=ok,
        detail=f"min pair distance {worst:.6f} vs safe radius {rs}, "
               f"incomplete modes {short or 'none'}, budget 300s",
        elapsed=elapsed)


def check_connectivity_maintenance(cache: Optional[RunCache] = None) -> CriterionResult:
    """Positive algebraic connectivity and connected subgroup subgraphs at
    every step of every mode."""
    cache = cache or RunCache()
    t0 = time.time()
    lam_min = math.inf
    broken_steps = 0
    for mode in ConnectivityMode:
        for rep in cache.get(0, mode).reports:
            lam_min = min(lam_min, rep.lambda2)
            if not all(rep.subgroup_connected):
                broken_steps += 1
    return CriterionResult(
        name="connectivity maintenance (team and subgroups, every step)",
        passed=lam_min > 0.0 and broken_steps == 0,
        detail=f"min lambda2 {lam_min:.4f}, "
               f"steps with a disconnected subgroup {broken_steps}",
        elapsed=time.time() - t0)


def check_perturbation_advantage(cache: Optional[RunCache] = None) -> CriterionResult:
    """Recomputing the tree perturbs nominal behaviors strictly less than
    either frozen-link baseline, on three scenario seeds."""
    cache = cache or RunCache()
    t0 = time.time()
    losses = []
    for seed in (0, 1, 2):
        scores = {}
        for mode in (ConnectivityMode.CENTRALIZED_MCCST,
                     ConnectivityMode.FIXED_INITIAL_MST,
                     ConnectivityMode.FIXED_INITIAL_GRAPH):
            reps = cache.get(seed, mode).reports
            scores[mode] = float(np.mean([r.perturbation for r in reps]))
        tree = scores[ConnectivityMode.CENTRALIZED_MCCST]
        for mode in (ConnectivityMode.FIXED_INITIAL_MST,
                     ConnectivityMode.FIXED_INITIAL_GRAPH):
            if not tree < scores[mode]:
                losses.append(f"seed {seed} vs {mode.value} "
                              f"({tree:.5f} >= {scores[mode]:.5f})")
    return CriterionResult(
        name="perturbation advantage over frozen-link baselines",
        passed=not losses,
        detail="strictly lower mean perturbation on seeds 0-2"
               if not losses else "; ".join(losses),
        elapsed=time.time() - t0)


def check_tracking_advantage(cache: Optional[RunCache] = None) -> CriterionResult:
    """Recomputing the tree ends strictly closer to the task sites than
    either frozen-link baseline, on three scenario seeds."""
    cache = cache or RunCache()
    t0 = time.time()
    losses = []
    for seed in (0, 1, 2):
        finals = {}
        for mode in (ConnectivityMode.CENTRALIZED_MCCST,
                     ConnectivityMode.FIXED_INITIAL_MST,
                     ConnectivityMode.FIXED_INITIAL_GRAPH):
            finals[mode] = cache.get(seed, mode).reports[-1].mean_dist_to_target
        tree = finals[ConnectivityMode.CENTRALIZED_MCCST]
        for mode in (ConnectivityMode.FIXED_INITIAL_MST,
                     ConnectivityMode.FIXED_INITIAL_GRAPH):
            if not tree < finals[mode]:
                losses.append(f"seed {seed} vs {mode.value} "
                              f"({tree:.3f} >= {finals[mode]:.3f})")
    return CriterionResult(
        name="tracking advantage over frozen-link baselines",
        passed=not losses,
        detail="strictly smaller final mean target distance on seeds 0-2"
               if not losses else "; ".join(losses),
        elapsed=time.time() - t0)


def check_message_scaling(cache: Optional[RunCache] = None) -> CriterionResult:
    """Mean messages per tree construction fit m(N) <= c * N * log2(N) with a
    near-constant c: the fitted c at 100 robots stays within twice the fitted
    c at 20 robots."""
    t0 = time.time()
    fitted = {}
    for n in (10, 20, 40, 60, 80, 100):
        counts = []
        for rep in range(10):
            graph = random_graph_instance(n, 4, seed=70_000 + 37 * n + rep)
            _, stats = run_protocol(graph)
            counts.append(stats.messages)
        fitted[n] = float(np.mean(counts)) / (n * math.log2(n))
    elapsed = time.time() - t0
    ratio = fitted[100] / fitted[20]
    ok = ratio <= 2.0 and elapsed < 600.0
    per_n = ", ".join(f"{n}:{fitted[n]:.2f}" for n in sorted(fitted))
    return CriterionResult(
        name="message scaling (fitted c in m <= c N log2 N)",
        passed=ok,
        detail=f"fitted c {{{per_n}}}, ratio c(100)/c(20) = "
               f"{ratio:.2f} <= 2, budget 600s",
        elapsed=elapsed)


def check_filter_against_reference(cache: Optional[RunCache] = None) -> CriterionResult:
    """The active-set solve matches an independent projected-gradient solve
    on 1000 random instances, with certified optimality residuals."""
    t0 = time.time()
    rng = random.Random(3)
    worst_du = 0.0
    worst_kkt = 0.0
    fell_back = 0
    for k in range(1000):
        n = rng.randint(2, 4)
        cfg = WorldConfig(comm_radius=2.9, safe_radius=0.1,
                          gamma=rng.uniform(0.5, 2.0), dt=0.01,
                          qp_facets=rng.choice([4, 6, 8]),
                          discrete_margin=rng.random() < 0.5,
                          qp_prune=rng.random() < 0.5)
        robots: list[RobotState] = []
        for i in range(n):
            while True:
                p = (rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2))
                if all((p[0] - q.position[0]) ** 2 + (p[1] - q.position[1]) ** 2
                       > (2 * cfg.safe_radius) ** 2 for q in robots):
                    break
            robots.append(RobotState(id=i, position=p, subgroup=0,
                                     speed_limit=rng.uniform(0.5, 1.5)))
        edges = frozenset((i, i + 1) for i in range(n - 1))
        u_hat = np.array([[rng.uniform(-2, 2), rng.uniform(-2, 2)]
                          for _ in range(n)])
        prob = assemble_qp(robots, u_hat, edges, cfg)
        sol = solve_qp(prob)
        if sol.status is not QpStatus.OPTIMAL:
            fell_back += 1
            continue
        ref = reference_solve(prob)
        worst_du = max(worst_du, float(np.max(np.abs(sol.u_star - ref))))
        worst_kkt = max(worst_kkt, sol.kkt_residual)
    ok = fell_back == 0 and worst_du <= 1e-6 and worst_kkt <= 1e-8
    return CriterionResult(
        name="control filter vs independent reference (1000 instances)",
        passed=ok,
        detail=f"worst |u - ref| {worst_du:.2e} <= 1e-6, "
               f"worst KKT residual {worst_kkt:.2e} <= 1e-8, "
               f"fallbacks {fell_back}",
        elapsed=time.time() - t0)


def check_one_step_invariance(cache: Optional[RunCache] = None) -> CriterionResult:
    """10000 random two-robot states starting inside both barrier regions
    stay inside them after one Euler step of the filtered controls."""
    t0 = time.time()
    rng = random.Random(99)
    worst = math.inf
    fell_back = 0
    for k in range(10_000):
        cfg = WorldConfig(comm_radius=1.0, safe_radius=0.05,
                          gamma=rng.uniform(0.5, 2.0), dt=1e-3,
                          qp_facets=8, discrete_margin=True, qp_prune=False)
        # Bias the sampling toward both barrier boundaries, and pin some
        # states exactly onto them.
        u = rng.random()
        if u < 0.1:
            d = cfg.safe_radius
        elif u < 0.2:
            d = cfg.comm_radius
        elif u < 0.5:
            d = cfg.safe_radius * (1.0 + 0.2 * rng.random())
        elif u < 0.8:
            d = cfg.comm_radius * (1.0 - 0.05 * rng.random())
        else:
            d = rng.uniform(cfg.safe_radius, cfg.comm_radius)
        ang = rng.uniform(0.0, 2.0 * math.pi)
        pa = (rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3))
        pb = (pa[0] + d * math.cos(ang), pa[1] + d * math.sin(ang))
        robots = [
            RobotState(id=0, position=pa, speed_limit=rng.uniform(0.5, 1.5)),
            RobotState(id=1, position=pb, speed_limit=rng.uniform(0.5, 1.5)),
        ]
        u_hat = np.array([[rng.uniform(-2, 2), rng.uniform(-2, 2)]
                          for _ in range(2)])
        prob = assemble_qp(robots, u_hat.reshape(-1), frozenset({(0, 1)}), cfg)
        sol = solve_qp(prob)
        if sol.status is not QpStatus.OPTIMAL:
            fell_back += 1
        ux = sol.u_star
        qa = (pa[0] + cfg.dt * ux[0], pa[1] + cfg.dt * ux[1])
        qb = (pb[0] + cfg.dt * ux[2], pb[1] + cfg.dt * ux[3])
        worst = min(worst,
                    h_safety(qa, qb, cfg.safe_radius),
                    h_connectivity(qa, qb, cfg.comm_radius))
    return CriterionResult(
        name="one-step barrier invariance (10000 two-robot states)",
        passed=worst >= -1e-6,
        detail=f"worst post-step barrier value {worst:.3e} >= -1e-6, "
               f"zero-control fallbacks {fell_back}",
        elapsed=time.time() - t0)


def check_run_determinism(cache: Optional[RunCache] = None) -> CriterionResult:
    """Distributed and centralized runs produce bitwise identical
    trajectories, and re-running a mode reproduces itself bitwise."""
    cache = cache or RunCache()
    t0 = time.time()
    td = cache.trajectory(0, ConnectivityMode.DISTRIBUTED_MCCST)
    tc = cache.trajectory(0, ConnectivityMode.CENTRALIZED_MCCST)
    modes_equal = td == tc
    rerun: list[tuple] = []
    run(mix40_scenario(0), ConnectivityMode.DISTRIBUTED_MCCST,
        observer=lambda k, w, un, sol: rerun.append(
            tuple(r.position for r in w.robots)))
    repeat_equal = tuple(rerun) == td
    return CriterionResult(
        name="determinism (distributed == centralized, reruns bitwise equal)",
        passed=modes_equal and repeat_equal,
        detail=f"distributed vs centralized identical: {modes_equal}, "
               f"rerun identical: {repeat_equal}",
        elapsed=time.time() - t0)


ALL_CHECKS: tuple[Callable[[Optional[RunCache]], CriterionResult], ...] = (
    check_tree_agreement,
    check_subgroups_merge_first,
    check_long_horizon_safety,
    check_connectivity_maintenance,
    check_perturbation_advantage,
    check_tracking_advantage,
    check_message_scaling,
    check_filter_against_reference,
    check_one_step_invariance,
    check_run_determinism,
)


def run_all(emit: Optional[Callable[[str], None]] = print) -> list[CriterionResult]:
    cache = RunCache()
    results = []
    for check in ALL_CHECKS:
        result = check(cache)
        results.append(result)
        if emit is not None:
            emit(result.line())
    return results
