import math

import pytest

from patrolsynth import validate

GOLDEN = (math.sqrt(5) - 1) / 2

_criteria: list[tuple[str, bool, str]] = []


@pytest.fixture
def criterion():
    """Record one acceptance line; printed in the terminal summary."""

    def record(name, passed, detail=""):
        _criteria.append((name, bool(passed), detail))
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _criteria:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}  {detail}")


@pytest.fixture
def example1():
    return validate([(3, 2, 1)], 1.0)


@pytest.fixture
def example2():
    return validate([(2, 2, 6), (2, 2, 3), (2, 2, 2)], 1.0)


@pytest.fixture(scope="session")
def surveillance():
    return validate([(7_000_000, 200, 100_000), (500_000, 1200, 130_000), (300_000, 9000, 400_000)], 0.7)
