"""Full-scale acceptance criteria, one test per criterion.

Every test prints its criterion's summary line and asserts it passed.
The module shares a single RunCache so the heavy benchmark simulations
several checks rely on execute once, not once per test; any test still
works standalone (it just pays for the runs it needs).
"""
import pytest

from swarmmix import acceptance
from swarmmix.acceptance import RunCache

pytestmark = pytest.mark.acceptance

_cache = RunCache()


def _run(check):
    result = check(_cache)
    print(result.line())
    assert result.passed, result.line()


def test_trees_match_centralized_oracle():
    _run(acceptance.check_tree_agreement)


def test_subgroups_merge_before_crossing():
    _run(acceptance.check_subgroups_merge_first)


def test_long_horizon_safety_margin():
    _run(acceptance.check_long_horizon_safety)


def test_connectivity_never_lost():
    _run(acceptance.check_connectivity_maintenance)


def test_perturbation_beats_fixed_baselines():
    _run(acceptance.check_perturbation_advantage)


def test_tracking_beats_fixed_baselines():
    _run(acceptance.check_tracking_advantage)


def test_messages_scale_near_n_log_n():
    _run(acceptance.check_message_scaling)


def test_filter_matches_reference_solver():
    _run(acceptance.check_filter_against_reference)


def test_barriers_hold_after_one_step():
    _run(acceptance.check_one_step_invariance)


def test_runs_are_deterministic():
    _run(acceptance.check_run_determinism)
