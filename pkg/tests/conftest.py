import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cmk import spheregrid as sg

settings.register_profile(
    "cmk",
    max_examples=40,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("cmk")


@pytest.fixture(scope="session")
def axi3():
    return sg.build_grid(3, "axisym", 128)


@pytest.fixture(scope="session")
def axi2():
    return sg.build_grid(2, "axisym", 128)


@pytest.fixture(scope="session")
def s2():
    return sg.build_grid(2, "full2d", (32, 64))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def random_sym(rng, n, scale=1.0):
    A = rng.normal(scale=scale, size=(n, n))
    return 0.5 * (A + A.T)


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE = {}


def record(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[number] = f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[key])
