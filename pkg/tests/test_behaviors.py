"""Per-subgroup behavior laws and the robot-to-slot assignment."""
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from swarmmix.behaviors import (
    assignment_from_scenario,
    circle_formation_control,
    nominal_controls,
    rendezvous_control,
    robot_target,
    slot_point,
)
from swarmmix.core import (
    CircleFormation,
    Rendezvous,
    RobotState,
    Scenario,
    Waypoint,
    WorldConfig,
)


def _scenario(robots, subgroups):
    return Scenario(robots=tuple(robots), subgroups=tuple(subgroups),
                    config=WorldConfig(), step_count=10)


def test_rendezvous_control_saturates_at_the_speed_limit():
    u = rendezvous_control((0.0, 0.0), (3.0, 4.0), gain=1.0, speed_limit=1.0)
    assert u == pytest.approx([0.6, 0.8])


def test_rendezvous_control_is_linear_when_slow():
    u = rendezvous_control((0.0, 0.0), (0.3, 0.4), gain=1.0, speed_limit=1.0)
    assert u == pytest.approx([0.3, 0.4])
    doubled = rendezvous_control((0.0, 0.0), (0.3, 0.4), gain=2.0, speed_limit=10.0)
    assert doubled == pytest.approx([0.6, 0.8])


def test_slot_points_spread_evenly_on_the_circle():
    spec = CircleFormation(center=(1.0, -2.0), radius=2.0)
    pts = [slot_point(spec, k, 4) for k in range(4)]
    assert pts[0] == pytest.approx((3.0, -2.0))
    assert pts[1] == pytest.approx((1.0, 0.0))
    assert pts[2] == pytest.approx((-1.0, -2.0))
    assert pts[3] == pytest.approx((1.0, -4.0))
    for p in pts:
        assert math.dist(p, spec.center) == pytest.approx(spec.radius)


def test_circle_control_pulls_toward_the_own_slot():
    spec = CircleFormation(center=(0.0, 0.0), radius=1.0, gain=1.0)
    u = circle_formation_control((0.2, 0.0), spec, slot=0, slot_count=4,
                                 speed_limit=10.0)
    assert u == pytest.approx([0.8, 0.0])


def test_assignment_slots_follow_id_order_within_subgroup():
    robots = [RobotState(0, (0.0, 0.0), subgroup=1),
              RobotState(1, (1.0, 0.0), subgroup=0),
              RobotState(2, (2.0, 0.0), subgroup=1),
              RobotState(3, (3.0, 0.0), subgroup=1)]
    scn = _scenario(robots, [Rendezvous((0.0, 0.0)),
                             CircleFormation((0.0, 0.0), 1.0)])
    a = assignment_from_scenario(scn)
    assert a.slots[1] == 0 and a.slot_counts[1] == 1
    assert [a.slots[i] for i in (0, 2, 3)] == [0, 1, 2]
    assert all(a.slot_counts[i] == 3 for i in (0, 2, 3))


def test_robot_target_depends_on_the_behavior():
    robots = [RobotState(0, (0.0, 0.0), subgroup=0),
              RobotState(1, (1.0, 0.0), subgroup=1),
              RobotState(2, (2.0, 0.0), subgroup=2)]
    scn = _scenario(robots, [Rendezvous((5.0, 5.0)),
                             Waypoint((-1.0, 2.0)),
                             CircleFormation((0.0, 0.0), 1.0)])
    a = assignment_from_scenario(scn)
    assert robot_target(a, 0) == (5.0, 5.0)
    assert robot_target(a, 1) == (-1.0, 2.0)
    assert robot_target(a, 2) == pytest.approx((1.0, 0.0))  # its circle slot


def test_nominal_controls_dispatch_per_subgroup():
    robots = [RobotState(0, (0.0, 0.0), subgroup=0, speed_limit=1.0),
              RobotState(1, (0.0, 0.0), subgroup=1, speed_limit=1.0)]
    scn = _scenario(robots, [Rendezvous((3.0, 4.0)), Waypoint((0.0, -8.0))])
    a = assignment_from_scenario(scn)
    u = nominal_controls(np.array([[0.0, 0.0], [0.0, 0.0]]), [1.0, 1.0], a)
    assert u.shape == (2, 2)
    assert u[0] == pytest.approx([0.6, 0.8])
    assert u[1] == pytest.approx([0.0, -1.0])


@given(px=st.floats(-10, 10), py=st.floats(-10, 10),
       tx=st.floats(-10, 10), ty=st.floats(-10, 10),
       gain=st.floats(0.1, 5.0), limit=st.floats(0.1, 3.0))
def test_controls_never_exceed_the_speed_limit(px, py, tx, ty, gain, limit):
    u = rendezvous_control((px, py), (tx, ty), gain=gain, speed_limit=limit)
    assert float(np.hypot(*u)) <= limit + 1e-12
