import pytest

from ksubmod import zoo
from ksubmod.core import TabularFunction
from ksubmod.rounding import biased_rounder


@pytest.fixture
def two_part():
    # (0) -> 0, (1) -> 3, (2) -> 1
    return TabularFunction(1, 2, [0.0, 3.0, 1.0], monotone=True)


@pytest.fixture(scope="session")
def small_zoo():
    return zoo.small_zoo(50, seed=0)


@pytest.fixture(scope="session")
def monotone_zoo():
    return zoo.monotone_zoo(seed=0)


@pytest.fixture
def fake_rounder():
    """Independent per-row sampling with shrunken marginals; tail checks must flag it."""
    return biased_rounder()


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
