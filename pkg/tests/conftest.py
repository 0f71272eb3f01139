import numpy as np
import pytest

from degenspec.bs_solver import BSContext
from degenspec.potentials import Potential
from degenspec.surface_ops import SurfaceOperatorSet
from degenspec.symbols import KineticSymbol, build_momentum_grid, build_surface_quadrature

ACCEPTANCE_LINES = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])


@pytest.fixture(scope="session")
def bcs2d():
    return KineticSymbol(2, "bcs", 1.0, mu=1.0)


@pytest.fixture(scope="session")
def gauss2d():
    return Potential.gaussian(2, 1.0, 1.0)


@pytest.fixture(scope="session")
def quad2d(bcs2d):
    return build_surface_quadrature(bcs2d, 0.0, 64)


@pytest.fixture(scope="session")
def grid2d(bcs2d):
    return build_momentum_grid(bcs2d, 1e-5, angular=32)


@pytest.fixture(scope="session")
def ops2d(bcs2d, gauss2d, quad2d, grid2d):
    return SurfaceOperatorSet.build(quad2d, gauss2d, bcs2d, grid2d)


@pytest.fixture(scope="session")
def ctx2d(bcs2d, gauss2d, grid2d, quad2d):
    return BSContext(bcs2d, gauss2d, grid2d, 1.0, quad2d)


@pytest.fixture(scope="session")
def small_grid(bcs2d):
    # coarse grid for dense-matrix checks
    return build_momentum_grid(bcs2d, 1e-3, angular=8, order=4, outer_panels=4, core_panels=2,
                               ratio=0.5)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
