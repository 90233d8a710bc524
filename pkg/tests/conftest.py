import os

import pytest
from hypothesis import HealthCheck, settings

from signorini.mesh import build_unit_square, paper_tagging

settings.register_profile(
    "default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile(
    "ci", deadline=None, derandomize=True, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# pass/fail lines collected by test_acceptance.py
ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def square4():
    return build_unit_square(4, paper_tagging)


@pytest.fixture(scope="session")
def square8():
    return build_unit_square(8, paper_tagging)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
