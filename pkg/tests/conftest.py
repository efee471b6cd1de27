"""Shared fixtures for the test suite.

Solver-backed tests run on an eight-slot replica of the reference instance:
same geometry, nodes, and power levels, but endpoints pulled in so each
subproblem solves in milliseconds.  The full-size reference runs live in
test_acceptance.py with their own module-scoped fixtures.
"""

from __future__ import annotations

import pytest

from uavsec import default_fixture
from uavsec.baselines import initial_iterate
from uavsec.outage import run_algorithm2
from uavsec.worst_case import run_algorithm1


@pytest.fixture(scope="session")
def small_scenario():
    """Fast solver fixture.

    The endpoints keep one slot of kinematic slack so the fly-hover-fly
    initializer fits even though the subproblem mobility rows are tightened by
    the feasibility back-off (a boundary-exact leg count would need one extra
    slot).
    """
    return default_fixture().replace(
        n_slots=8, q_init_xy_m=(25.0, 0.0), q_final_xy_m=(-25.0, 0.0)
    )


@pytest.fixture(scope="session")
def small_point(small_scenario):
    """Initial expansion point of the bounded-error planner."""
    return initial_iterate(small_scenario, model="bounded")


@pytest.fixture(scope="session")
def small_wcr(small_scenario):
    """One full bounded-error (worst-case robust) run on the small scenario."""
    return run_algorithm1(small_scenario)


@pytest.fixture(scope="session")
def small_ocr(small_scenario):
    """One full Gaussian-error (outage-constrained) run on the small scenario."""
    return run_algorithm2(small_scenario)
