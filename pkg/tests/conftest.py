import numpy as np
import pytest

from voi_sched.model import FilterParams, ProcessParams


@pytest.fixture
def pp09():
    return ProcessParams(0.9, 1.0)


@pytest.fixture
def fp02():
    return FilterParams(0.2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
