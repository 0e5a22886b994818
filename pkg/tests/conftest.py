import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mfising import RngSpec, sample_dataset

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

_ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_line():
    """Record a one-line verdict that is echoed in the terminal summary."""

    def record(number, passed, detail):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:>2}: {detail}"
        print(line)
        _ACCEPTANCE_LINES.append(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def unimodal_data():
    return sample_dataset((0.5, 0.3, 0.1), 300, 1000, RngSpec(7, 0))


@pytest.fixture(scope="session")
def small_data():
    return sample_dataset((0.4, -0.3, 0.2), 50, 20, RngSpec(3, 0))


def finite_diff_grad(f, x, step=1e-5):
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        g[i] = (f(x + e) - f(x - e)) / (2 * step)
    return g
