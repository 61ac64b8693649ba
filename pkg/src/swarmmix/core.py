"""Domain types, scenario loading/serialization, and world validation.

A scenario is a single YAML document describing the team (positions,
subgroup memberships, speed limits), one behavior per subgroup, the
world parameters, and a default step count.  Robot ids are dense
integers ``0..n-1`` given by document order; subgroup ids are dense
``0..m-1`` and index the ``subgroups`` list.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence, Union

import yaml

__all__ = [
    "ScenarioError",
    "Lexicographic",
    "Explicit",
    "LambdaMode",
    "SingleIntegrator",
    "Unicycle",
    "Dynamics",
    "Rendezvous",
    "Waypoint",
    "CircleFormation",
    "BehaviorSpec",
    "RobotState",
    "WorldConfig",
    "Scenario",
    "load_scenario",
    "load_scenario_file",
    "serialize_scenario",
    "validate_world",
]


class ScenarioError(ValueError):
    """A scenario document failed to parse or violated a validity invariant."""


# --- weight inflation modes -------------------------------------------------

@dataclass(frozen=True)
class Lexicographic:
    """Intra-subgroup edges strictly precede inter-subgroup edges; ties by -w, then (i, j)."""


@dataclass(frozen=True)
class Explicit:
    """Multiply intra-subgroup weights by a finite factor ``lam`` (> 1).

    Kept for fidelity experiments; a finite factor cannot guarantee
    subgroup-connected trees when some intra weights are non-positive.
    """

    lam: float

    def __post_init__(self) -> None:
        if not self.lam > 1.0:
            raise ScenarioError(f"explicit inflation factor must exceed 1, got {self.lam}")


LambdaMode = Union[Lexicographic, Explicit]


# --- dynamics ---------------------------------------------------------------

@dataclass(frozen=True)
class SingleIntegrator:
    pass


@dataclass(frozen=True)
class Unicycle:
    """Differential-drive kinematics controlled through a look-ahead point at distance ``lookahead``."""

    lookahead: float = 0.05

    def __post_init__(self) -> None:
        if not self.lookahead > 0.0:
            raise ScenarioError(f"unicycle lookahead must be positive, got {self.lookahead}")


Dynamics = Union[SingleIntegrator, Unicycle]


# --- behaviors --------------------------------------------------------------

@dataclass(frozen=True)
class Rendezvous:
    """Drive every member of the subgroup toward a shared meeting point."""

    target: tuple[float, float]
    gain: float = 1.0


@dataclass(frozen=True)
class Waypoint:
    """Drive every member toward a common waypoint (same law as rendezvous, different intent)."""

    target: tuple[float, float]
    gain: float = 1.0


@dataclass(frozen=True)
class CircleFormation:
    """Distribute the subgroup on evenly spaced slots of a circle."""

    center: tuple[float, float]
    radius: float
    gain: float = 1.0


BehaviorSpec = Union[Rendezvous, Waypoint, CircleFormation]


# --- robots and world -------------------------------------------------------

@dataclass(frozen=True)
class RobotState:
    id: int
    position: tuple[float, float]
    heading: float = 0.0            # radians; used only by unicycle integration
    subgroup: int = 0
    speed_limit: float = 1.0


@dataclass(frozen=True)
class WorldConfig:
    comm_radius: float = 1.6
    safe_radius: float = 0.02
    gamma: float = 1.0
    dt: float = 0.01
    lambda_mode: LambdaMode = field(default_factory=Lexicographic)
    dynamics: Dynamics = field(default_factory=SingleIntegrator)
    qp_tolerance: float = 1e-8
    qp_facets: int = 8
    qp_prune: bool = True
    # Tighten connectivity rows by dt*(a_i+a_j)^2 so one Euler step provably
    # cannot leave the connectivity set (the continuous-time row alone allows
    # an O(dt^2) tangential overshoot past the comm radius).
    discrete_margin: bool = True
    seed: int = 0


@dataclass(frozen=True)
class Scenario:
    robots: tuple[RobotState, ...]
    subgroups: tuple[BehaviorSpec, ...]
    config: WorldConfig = field(default_factory=WorldConfig)
    step_count: int = 1500


# --- geometry helpers (local BFS; the graph module has the full machinery) --

def _dist(a: tuple[float, float], b: tuple[float, float]) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def _bfs_reaches_all(nodes: Sequence[int], adj: Mapping[int, list[int]]) -> bool:
    if not nodes:
        return True
    seen = {nodes[0]}
    frontier = [nodes[0]]
    while frontier:
        nxt = []
        for u in frontier:
            for v in adj.get(u, ()):
                if v not in seen:
                    seen.add(v)
                    nxt.append(v)
        frontier = nxt
    return all(u in seen for u in nodes)


def validate_world(robots: Sequence[RobotState], config: WorldConfig) -> list[str]:
    """Return a list of violated invariants (empty when the world is valid).

    Checks pairwise safety, global connectivity of the proximity graph, and
    connectivity of every subgroup's induced proximity graph.  Violation
    strings are stable and name the offending pair or subgroup.
    """
    violations: list[str] = []
    n = len(robots)
    for i in range(n):
        for j in range(i + 1, n):
            if _dist(robots[i].position, robots[j].position) < config.safe_radius:
                violations.append(f"safety violation ({robots[i].id},{robots[j].id})")

    adj: dict[int, list[int]] = {r.id: [] for r in robots}
    for i in range(n):
        for j in range(i + 1, n):
            if _dist(robots[i].position, robots[j].position) <= config.comm_radius:
                adj[robots[i].id].append(robots[j].id)
                adj[robots[j].id].append(robots[i].id)

    if not _bfs_reaches_all([r.id for r in robots], adj):
        violations.append("global connectivity lost")

    groups = sorted({r.subgroup for r in robots})
    for g in groups:
        members = [r.id for r in robots if r.subgroup == g]
        member_set = set(members)
        sub_adj = {u: [v for v in adj[u] if v in member_set] for u in members}
        if not _bfs_reaches_all(members, sub_adj):
            violations.append(f"subgroup {g} induced graph disconnected")
    return violations


# --- YAML mapping -----------------------------------------------------------

def _behavior_to_doc(b: BehaviorSpec) -> dict:
    if isinstance(b, Rendezvous):
        return {"behavior": "rendezvous", "target": list(b.target), "gain": b.gain}
    if isinstance(b, Waypoint):
        return {"behavior": "waypoint", "target": list(b.target), "gain": b.gain}
    if isinstance(b, CircleFormation):
        return {"behavior": "circle", "center": list(b.center), "radius": b.radius, "gain": b.gain}
    raise ScenarioError(f"unknown behavior {b!r}")


def _behavior_from_doc(doc: object, index: int) -> BehaviorSpec:
    if not isinstance(doc, dict) or "behavior" not in doc:
        raise ScenarioError(f"subgroup {index}: expected a mapping with a 'behavior' key")
    kind = doc["behavior"]
    try:
        gain = float(doc.get("gain", 1.0))
        if kind == "rendezvous":
            tx, ty = doc["target"]
            return Rendezvous(target=(float(tx), float(ty)), gain=gain)
        if kind == "waypoint":
            tx, ty = doc["target"]
            return Waypoint(target=(float(tx), float(ty)), gain=gain)
        if kind == "circle":
            cx, cy = doc["center"]
            return CircleFormation(center=(float(cx), float(cy)),
                                   radius=float(doc["radius"]), gain=gain)
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"subgroup {index}: malformed {kind!r} behavior: {exc}") from exc
    raise ScenarioError(f"subgroup {index}: unknown behavior kind {kind!r}")


def _lambda_mode_to_doc(mode: LambdaMode) -> object:
    if isinstance(mode, Lexicographic):
        return "lexicographic"
    return {"explicit": mode.lam}


def _lambda_mode_from_doc(doc: object) -> LambdaMode:
    if doc in (None, "lexicographic"):
        return Lexicographic()
    if isinstance(doc, dict) and set(doc) == {"explicit"}:
        return Explicit(lam=float(doc["explicit"]))
    raise ScenarioError(f"unknown lambda_mode {doc!r}")


def _dynamics_to_doc(dyn: Dynamics) -> object:
    if isinstance(dyn, SingleIntegrator):
        return "single_integrator"
    return {"unicycle": {"lookahead": dyn.lookahead}}


def _dynamics_from_doc(doc: object) -> Dynamics:
    if doc in (None, "single_integrator"):
        return SingleIntegrator()
    if isinstance(doc, dict) and set(doc) == {"unicycle"}:
        sub = doc["unicycle"] or {}
        return Unicycle(lookahead=float(sub.get("lookahead", 0.05)))
    raise ScenarioError(f"unknown dynamics {doc!r}")


def serialize_scenario(scenario: Scenario) -> str:
    """Render a scenario as YAML text; ``load_scenario`` round-trips it exactly."""
    cfg = scenario.config
    doc = {
        "config": {
            "comm_radius": cfg.comm_radius,
            "safe_radius": cfg.safe_radius,
            "gamma": cfg.gamma,
            "dt": cfg.dt,
            "lambda_mode": _lambda_mode_to_doc(cfg.lambda_mode),
            "dynamics": _dynamics_to_doc(cfg.dynamics),
            "qp_tolerance": cfg.qp_tolerance,
            "qp_facets": cfg.qp_facets,
            "qp_prune": cfg.qp_prune,
            "discrete_margin": cfg.discrete_margin,
            "seed": cfg.seed,
        },
        "steps": scenario.step_count,
        "subgroups": [_behavior_to_doc(b) for b in scenario.subgroups],
        "robots": [
            {
                "position": list(r.position),
                "heading": r.heading,
                "subgroup": r.subgroup,
                "speed_limit": r.speed_limit,
            }
            for r in scenario.robots
        ],
    }
    return yaml.safe_dump(doc, sort_keys=False)


def load_scenario(text: str) -> Scenario:
    """Parse and validate a scenario document.

    Raises :class:`ScenarioError` naming the violated invariant; the initial
    world must satisfy pairwise safety, a connected proximity graph
    ("initial graph disconnected" otherwise) and a connected induced
    proximity graph per subgroup.
    """
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"scenario parse error: {exc}") from exc
    if not isinstance(doc, dict):
        raise ScenarioError("scenario parse error: document is not a mapping")

    cfg_doc = doc.get("config", {}) or {}
    if not isinstance(cfg_doc, dict):
        raise ScenarioError("config must be a mapping")
    try:
        config = WorldConfig(
            comm_radius=float(cfg_doc.get("comm_radius", 1.6)),
            safe_radius=float(cfg_doc.get("safe_radius", 0.02)),
            gamma=float(cfg_doc.get("gamma", 1.0)),
            dt=float(cfg_doc.get("dt", 0.01)),
            lambda_mode=_lambda_mode_from_doc(cfg_doc.get("lambda_mode")),
            dynamics=_dynamics_from_doc(cfg_doc.get("dynamics")),
            qp_tolerance=float(cfg_doc.get("qp_tolerance", 1e-8)),
            qp_facets=int(cfg_doc.get("qp_facets", 8)),
            qp_prune=bool(cfg_doc.get("qp_prune", True)),
            discrete_margin=bool(cfg_doc.get("discrete_margin", True)),
            seed=int(cfg_doc.get("seed", 0)),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(f"config: {exc}") from exc

    if not config.comm_radius > 0:
        raise ScenarioError("comm_radius must be positive")
    if not config.safe_radius > 0:
        raise ScenarioError("safe_radius must be positive")
    if not config.safe_radius < config.comm_radius:
        raise ScenarioError("safe_radius must be smaller than comm_radius")
    if not config.gamma > 0:
        raise ScenarioError("gamma must be positive")
    if not config.dt > 0:
        raise ScenarioError("dt must be positive")
    if config.qp_facets < 4:
        raise ScenarioError("qp_facets must be at least 4")

    step_count = int(doc.get("steps", 1500))
    if step_count < 0:
        raise ScenarioError("steps must be non-negative")

    sub_doc = doc.get("subgroups")
    if not isinstance(sub_doc, list) or not sub_doc:
        raise ScenarioError("scenario must define a non-empty subgroups list")
    behaviors = tuple(_behavior_from_doc(b, i) for i, b in enumerate(sub_doc))
    for i, b in enumerate(behaviors):
        if not b.gain > 0:
            raise ScenarioError(f"subgroup {i}: gain must be positive")
        if isinstance(b, CircleFormation) and not b.radius > 0:
            raise ScenarioError(f"subgroup {i}: circle radius must be positive")

    rob_doc = doc.get("robots")
    if not isinstance(rob_doc, list) or not rob_doc:
        raise ScenarioError("scenario must define a non-empty robots list")
    robots = []
    for rid, r in enumerate(rob_doc):
        if not isinstance(r, dict):
            raise ScenarioError(f"robot {rid}: expected a mapping")
        try:
            px, py = r["position"]
            robot = RobotState(
                id=rid,
                position=(float(px), float(py)),
                heading=float(r.get("heading", 0.0)),
                subgroup=int(r.get("subgroup", 0)),
                speed_limit=float(r.get("speed_limit", 1.0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ScenarioError(f"robot {rid}: {exc}") from exc
        if not robot.speed_limit > 0:
            raise ScenarioError(f"robot {rid}: speed_limit must be positive")
        if robot.subgroup < 0 or robot.subgroup >= len(behaviors):
            raise ScenarioError(f"robot {rid}: subgroup {robot.subgroup} has no behavior")
        robots.append(robot)

    used = {r.subgroup for r in robots}
    for g in range(len(behaviors)):
        if g not in used:
            raise ScenarioError(f"subgroup {g} has no robots")

    violations = validate_world(robots, config)
    violations = ["initial graph disconnected" if v == "global connectivity lost" else v
                  for v in violations]
    if violations:
        raise ScenarioError("; ".join(violations))

    return Scenario(robots=tuple(robots), subgroups=behaviors,
                    config=config, step_count=step_count)


def load_scenario_file(path: str) -> Scenario:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except FileNotFoundError:
        raise ScenarioError(f"scenario file not found: {path}") from None
    return load_scenario(text)
