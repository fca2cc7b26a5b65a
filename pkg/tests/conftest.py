import os

import pytest
from hypothesis import HealthCheck, settings

from pxlap import Domain, build_grid

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def unit():
    return Domain.unit(1)


@pytest.fixture(scope="session")
def square():
    return Domain.unit(2)


@pytest.fixture(scope="session")
def grid1(unit):
    return build_grid(unit, 32)


@pytest.fixture(scope="session")
def grid2(square):
    return build_grid(square, 8)


_CRITERIA = pytest.StashKey[dict]()


@pytest.fixture
def record_criterion(request):
    """Store one acceptance line per criterion; printed in the terminal summary."""
    store = request.config.stash.setdefault(_CRITERIA, {})

    def record(number, passed, detail, seconds):
        line = f"criterion {number:2d}  {'PASS' if passed else 'FAIL'}  {seconds:7.2f}s  {detail}"
        store[number] = line
        print(line)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(_CRITERIA, {})
    if store:
        terminalreporter.section("acceptance criteria")
        for number in sorted(store):
            terminalreporter.write_line(store[number])
