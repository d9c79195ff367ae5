import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from passopt.scenario import SystemConfig

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def small_cfg():
    """Default geometry on a coarse grid, fast enough for unit tests."""
    return SystemConfig(G=200)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report():
    def emit(name: str, ok: bool, detail: str, elapsed: float | None = None):
        t = f" [{elapsed:.1f}s]" if elapsed is not None else ""
        line = f"{name}: {'PASS' if ok else 'FAIL'} {detail}{t}"
        ACCEPTANCE_LINES.append(line)
        print(line)
    return emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
