"""Shared fixtures and the acceptance reporting hook."""

from __future__ import annotations

import pytest

from plancert.itinerary import generate_sandbox

_ACCEPTANCE_PREFIX = "tests/test_acceptance.py"


def pytest_runtest_logreport(report):
    """One pass/fail line per acceptance criterion."""
    if report.when != "call" or "test_acceptance" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    status = "PASS" if report.passed else "FAIL"
    print(f"\n[acceptance] {name}: {status}")


@pytest.fixture(scope="session")
def seeded_sandbox():
    """One shared sandbox + solvable specs for itinerary tests."""
    return generate_sandbox(7)
