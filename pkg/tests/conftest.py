from __future__ import annotations

import os

import pytest
from hypothesis import HealthCheck, settings

from recdigits import validate_companion

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def base2():
    return validate_companion([-2, 1], 0)


@pytest.fixture(scope="session")
def base2_k1():
    return validate_companion([-2, 1], 1)


@pytest.fixture(scope="session")
def golden():
    return validate_companion([-1, -1, 1], 0)


@pytest.fixture(scope="session")
def real_pair():
    return validate_companion([14, -8, 1], 0)


@pytest.fixture(scope="session")
def complex_pair():
    return validate_companion([25, -8, 1], 0)


def pytest_terminal_summary(terminalreporter):
    from tests import acceptance_log

    if acceptance_log.LINES:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_log.LINES:
            terminalreporter.write_line(line)
