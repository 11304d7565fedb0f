import pytest

from tubebumps.config import RunConfig
from tubebumps.pipeline import solve_profiles

ACCEPTANCE_LINES: list = []


@pytest.fixture(scope="session")
def cfg():
    return RunConfig()


@pytest.fixture(scope="session")
def profiles(cfg):
    return solve_profiles(cfg)


@pytest.fixture(scope="session")
def plus(profiles):
    return profiles[1]


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
