import os

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

_ACCEPTANCE: list[str] = []


@pytest.fixture
def criterion():
    """Record one verdict line per acceptance criterion, then assert it."""

    def report(number, passed, detail):
        _ACCEPTANCE.append(f"criterion {number}: {'PASS' if passed else 'FAIL'} ({detail})")
        print(_ACCEPTANCE[-1])
        assert passed, detail

    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
