"""Procedural scenario construction.

Robots are laid out on jittered grids, one cluster per subgroup, with the
cluster centroids arranged on a ring sized so that neighbouring clusters stay
within communication range.  Every candidate layout is validated (pairwise
safety, connected proximity graph, connected subgroup-induced graphs) and
regenerated with a derived seed on failure, up to a retry cap.
"""
from __future__ import annotations

import math
import random
from typing import Optional, Sequence

import numpy as np

from .core import (CircleFormation, Rendezvous, RobotState, Scenario, ScenarioError,
                   WorldConfig, validate_world)
from .graph import CommGraph, build_comm_graph

__all__ = [
    "cluster_positions",
    "random_scenario",
    "mix40_scenario",
    "random_graph_instance",
]

MAX_RETRIES = 100


def _subgroup_sizes(n: int, m: int) -> list[int]:
    base, extra = divmod(n, m)
    return [base + (1 if g < extra else 0) for g in range(m)]


def cluster_positions(n: int, m: int, rng: random.Random, comm_radius: float,
                      spread: float = 1.0) -> tuple[list[tuple[float, float]], list[int]]:
    """Jittered-grid cluster layout; returns positions and subgroup ids."""
    sizes = _subgroup_sizes(n, m)
    spacing = 0.45 * comm_radius
    halves = [0.5 * spacing * (math.ceil(math.sqrt(s)) - 1) for s in sizes]
    if m == 1:
        ring = 0.0
    else:
        # Size the ring so every adjacent cluster pair keeps its nearest
        # members within comm range (binding pair = smallest extents).
        reach = min(0.85 * comm_radius + halves[g] + halves[(g + 1) % m]
                    for g in range(m))
        ring = spread * reach / (2.0 * math.sin(math.pi / m))
    positions: list[tuple[float, float]] = []
    groups: list[int] = []
    for g, size in enumerate(sizes):
        ang = 2.0 * math.pi * g / m
        cx, cy = ring * math.cos(ang), ring * math.sin(ang)
        side = max(1, math.ceil(math.sqrt(size)))
        half = spacing * (side - 1) / 2.0
        for k in range(size):
            row, col = divmod(k, side)
            jx = rng.uniform(-0.12, 0.12) * spacing
            jy = rng.uniform(-0.12, 0.12) * spacing
            positions.append((cx - half + col * spacing + jx,
                              cy - half + row * spacing + jy))
            groups.append(g)
    return positions, groups


def random_scenario(n: int, m: int, seed: int, *,
                    config: Optional[WorldConfig] = None,
                    target_dist: float = 5.0,
                    circle_subgroups: Sequence[int] = (),
                    circle_radius: float = 0.5,
                    step_count: int = 1500) -> Scenario:
    """A validated scenario: clustered start, antipodal task site per subgroup.

    Each subgroup's site sits diametrically opposite its starting cluster, so
    all subgroups cross through the middle of the formation en route.
    Subgroups listed in ``circle_subgroups`` form circles at their site; the
    rest rendezvous there.  Raises :class:`ScenarioError` after the retry cap.
    """
    if m < 1 or m > n:
        raise ScenarioError(f"cannot split {n} robots into {m} subgroups")
    cfg = config or WorldConfig()
    for attempt in range(MAX_RETRIES):
        rng = random.Random(f"{seed}:{attempt}")
        # Shrink the ring a little on every retry: drawing clusters closer
        # can only help global connectivity (safety spacing is re-validated).
        positions, groups = cluster_positions(n, m, rng, cfg.comm_radius,
                                              spread=0.93 ** attempt)
        robots = tuple(
            RobotState(id=i, position=positions[i], subgroup=groups[i])
            for i in range(n)
        )
        if validate_world(robots, cfg):
            continue
        behaviors = []
        for g in range(m):
            # Across the ring, staggered half a sector: crossing streams meet
            # obliquely and shear past each other instead of wedging head-on.
            ang = 2.0 * math.pi * (g + 0.5) / m + math.pi
            site = (target_dist * math.cos(ang), target_dist * math.sin(ang))
            if g in circle_subgroups:
                behaviors.append(CircleFormation(center=site, radius=circle_radius))
            else:
                behaviors.append(Rendezvous(target=site))
        return Scenario(robots=robots, subgroups=tuple(behaviors),
                        config=cfg, step_count=step_count)
    raise ScenarioError(
        f"could not generate a valid {n}-robot/{m}-subgroup layout in {MAX_RETRIES} tries")


def mix40_scenario(seed: int = 0) -> Scenario:
    """The 40-robot, 4-subgroup benchmark: two rendezvous and two circle
    subgroups heading to four separate task sites."""
    cfg = WorldConfig(comm_radius=1.6, safe_radius=0.02, gamma=2.0, dt=0.01, seed=seed)
    return random_scenario(40, 4, seed, config=cfg, target_dist=3.0,
                           circle_subgroups=(2, 3), circle_radius=1.1,
                           step_count=1500)


def random_graph_instance(n: int, m: int, seed: int, *,
                          config: Optional[WorldConfig] = None) -> CommGraph:
    """A feasible weighted proximity graph with randomized nominal controls.

    Control directions are uniform on the speed disc, so edge weights mix
    signs and exercise the full comparator ordering.
    """
    cfg = config or WorldConfig()
    scenario = random_scenario(n, m, seed, config=cfg)
    rng = random.Random(f"{seed}:controls")
    u_nom = np.array([
        [rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)]
        for _ in range(n)
    ])
    norms = np.linalg.norm(u_nom, axis=1, keepdims=True)
    np.divide(u_nom, norms, out=u_nom, where=norms > 1.0)
    return build_comm_graph(scenario.robots, cfg, u_nom)
