import pytest
from hypothesis import HealthCheck, settings

from mechtransduce import _kernels

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session", autouse=True)
def compiled_kernels():
    _kernels.warmup()


_ACCEPTANCE_LINES = []


@pytest.fixture
def criterion_line():
    """Record one PASS/FAIL line for the terminal summary."""

    def record(number, title, passed, detail=""):
        line = f"criterion {number} {'PASS' if passed else 'FAIL'} {title}: {detail}".rstrip()
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
