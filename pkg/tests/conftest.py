import sys

import pytest

from harmonic_process.steady_closed import BoundaryParams


@pytest.fixture
def driven():
    return BoundaryParams("2/5", "1/5")


@pytest.fixture
def flat():
    return BoundaryParams("3/10", "3/10")


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.RESULTS:
        terminalreporter.write_line(line)
