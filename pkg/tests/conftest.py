import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cutprep.bg_mesh import build_cartesian_mesh
from cutprep.geometry import Plane, Sphere
from cutprep.pipeline import run_serial

settings.register_profile("cutprep", deadline=None, max_examples=30,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("cutprep")


def unit_square_mesh(n=8, p=2, length=2.0, origin=0.0):
    return build_cartesian_mesh(2, (n, n), origin, length / n, p)


@pytest.fixture(scope="session")
def circle_run():
    bg = unit_square_mesh(12)
    return run_serial(bg, [Sphere([1.0, 1.0], 0.6)], void=(1,))


@pytest.fixture(scope="session")
def two_material_run():
    """Inclusion (material 0) in a matrix (material 1), nothing void."""
    bg = unit_square_mesh(10)
    return run_serial(bg, [Sphere([0.93, 1.07], 0.55)])


@pytest.fixture(scope="session")
def plane_run():
    bg = unit_square_mesh(8)
    return run_serial(bg, [Plane([1.0, 0.3], 0.9)])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
