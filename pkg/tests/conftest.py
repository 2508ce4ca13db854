import numpy as np
import pytest

from jumpmesh.driver import RunConfig, run
from jumpmesh.jumpfun import JumpConfig
from jumpmesh.problems import get_problem


def run_problem(name, **kw):
    jump = JumpConfig(safety=kw.pop("safety", 1.0))
    return run(get_problem(name), RunConfig(jump=jump, **kw))


@pytest.fixture(scope="session")
def robot_arm_run():
    return run_problem("robot-arm", epsilon=1e-6)


@pytest.fixture(scope="session")
def min_time_run():
    return run_problem("min-time-di", epsilon=1e-6, initial_intervals=9)


@pytest.fixture(scope="session")
def min_energy_run():
    return run_problem("min-energy-di", epsilon=1e-6)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE_KEY] = []


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line per acceptance criterion; the lines are repeated in the summary."""
    lines = request.config.stash[_ACCEPTANCE_KEY]

    def record(number, ok, detail):
        line = f"CRITERION {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        lines.append(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
