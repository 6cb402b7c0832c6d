import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE: list[str] = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line per acceptance criterion, then assert it."""
    def record(number: int, name: str, ok: bool, detail: str):
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {name}: {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
