import pytest
from hypothesis import settings

from apfplatoon.scenario import flagship
from apfplatoon.simulator import run

settings.register_profile("default", max_examples=200, deadline=None)
settings.load_profile("default")

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def flagship_scenario():
    return flagship()


@pytest.fixture(scope="session")
def flagship_log(flagship_scenario):
    return run(flagship_scenario)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
