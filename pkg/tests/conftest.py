import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from llmaxwell.domain import GridSpec, build_ball_mask, build_cube_mask, build_torus_mask, make_boundary_data
from llmaxwell.field import SolverParams

settings.register_profile("default", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile("default")

N_SMALL = 24


@pytest.fixture(scope="session")
def grid():
    return GridSpec(1.0, N_SMALL)


@pytest.fixture(scope="session")
def torus(grid):
    return build_torus_mask(0.3, 0.1, grid)


@pytest.fixture(scope="session")
def ball(grid):
    return build_ball_mask(0.3, grid)


@pytest.fixture(scope="session")
def cube(grid):
    return build_cube_mask(0.5, grid)


@pytest.fixture(scope="session")
def bdata(torus):
    return make_boundary_data(torus, winding=1, amplitude=0.3)


@pytest.fixture(scope="session")
def params(torus):
    return SolverParams.from_grid_units(200.0, torus.h, linear_tol=1e-12, fixed_point_tol=1e-11)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def acceptance_log(request):
    lines = []
    request.config._acceptance_lines = lines
    return lines


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip("."))):
            terminalreporter.write_line(line)
