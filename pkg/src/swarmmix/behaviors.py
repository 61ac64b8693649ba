"""Nominal (pre-revision) control laws, one per subgroup behavior.

Every law is a saturated proportional controller toward a point target;
circle formations assign each member a fixed slot on the circle at load
time (slots follow robot id order within the subgroup, so the assignment
is deterministic and never reshuffles mid-run).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import BehaviorSpec, CircleFormation, Rendezvous, Scenario, Waypoint

__all__ = [
    "BehaviorAssignment",
    "assignment_from_scenario",
    "rendezvous_control",
    "circle_formation_control",
    "robot_target",
    "nominal_controls",
]


@dataclass(frozen=True)
class BehaviorAssignment:
    """Per-robot behavior binding: the subgroup's spec plus the robot's slot."""

    specs: tuple[BehaviorSpec, ...]      # indexed by robot id
    slots: tuple[int, ...]               # slot within the subgroup's circle (0 otherwise)
    slot_counts: tuple[int, ...]         # members in the robot's subgroup


def assignment_from_scenario(scenario: Scenario) -> BehaviorAssignment:
    members: dict[int, list[int]] = {}
    for r in scenario.robots:
        members.setdefault(r.subgroup, []).append(r.id)
    slots = {}
    counts = {}
    for g, ids in members.items():
        for slot, rid in enumerate(sorted(ids)):
            slots[rid] = slot
            counts[rid] = len(ids)
    order = [r.id for r in scenario.robots]
    return BehaviorAssignment(
        specs=tuple(scenario.subgroups[r.subgroup] for r in scenario.robots),
        slots=tuple(slots[i] for i in order),
        slot_counts=tuple(counts[i] for i in order),
    )


def _saturate(v: np.ndarray, limit: float) -> np.ndarray:
    speed = float(np.hypot(v[0], v[1]))
    if speed > limit:
        return v * (limit / speed)
    return v


def rendezvous_control(position: Sequence[float], target: Sequence[float],
                       gain: float, speed_limit: float) -> np.ndarray:
    v = gain * (np.asarray(target, float) - np.asarray(position, float))
    return _saturate(v, speed_limit)


def slot_point(spec: CircleFormation, slot: int, slot_count: int) -> tuple[float, float]:
    theta = 2.0 * math.pi * slot / slot_count
    return (spec.center[0] + spec.radius * math.cos(theta),
            spec.center[1] + spec.radius * math.sin(theta))


def circle_formation_control(position: Sequence[float], spec: CircleFormation,
                             slot: int, slot_count: int, speed_limit: float) -> np.ndarray:
    return rendezvous_control(position, slot_point(spec, slot, slot_count),
                              spec.gain, speed_limit)


def robot_target(assignment: BehaviorAssignment, robot_id: int) -> tuple[float, float]:
    """The point the robot's behavior steers it toward (slot point for circles)."""
    spec = assignment.specs[robot_id]
    if isinstance(spec, CircleFormation):
        return slot_point(spec, assignment.slots[robot_id], assignment.slot_counts[robot_id])
    return spec.target


def nominal_controls(positions: np.ndarray, speed_limits: Sequence[float],
                     assignment: BehaviorAssignment) -> np.ndarray:
    """Stacked nominal controls, shape (n, 2)."""
    n = len(assignment.specs)
    u = np.zeros((n, 2))
    for i in range(n):
        spec = assignment.specs[i]
        if isinstance(spec, (Rendezvous, Waypoint)):
            u[i] = rendezvous_control(positions[i], spec.target, spec.gain, speed_limits[i])
        elif isinstance(spec, CircleFormation):
            u[i] = circle_formation_control(positions[i], spec,
                                            assignment.slots[i], assignment.slot_counts[i],
                                            speed_limits[i])
        else:
            raise TypeError(f"unknown behavior {spec!r}")
    return u
