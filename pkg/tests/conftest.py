import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from efrlab.grid import GeometrySpec
from efrlab.orchestrator import get_grid

settings.register_profile("efrlab", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("efrlab")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def cyl_grid():
    return get_grid(GeometrySpec.channel_cylinder(), 64, 12)


@pytest.fixture(scope="session")
def cyl_fine():
    return get_grid(GeometrySpec.channel_cylinder(), 128, 24)


@pytest.fixture(scope="session")
def channel_grid():
    return get_grid(GeometrySpec.channel(), 32, 8)


@pytest.fixture(scope="session")
def box_grid():
    return get_grid(GeometrySpec.periodic_box(), 16, 16)


def random_velocity(grid, rng):
    """Random field with zeros on solid and wall faces, random inlet/outflow values."""
    from efrlab.fields import VectorField

    u = rng.standard_normal(grid.u_shape)
    v = rng.standard_normal(grid.v_shape)
    if not grid.periodic:
        keep = grid.u_active.copy()
        keep[0] = True
        u = np.where(keep, u, 0.0)
        v = np.where(grid.v_active, v, 0.0)
    return VectorField(grid, u, v)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
