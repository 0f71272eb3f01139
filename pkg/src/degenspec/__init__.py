"""Bound states of Schrodinger-type operators whose kinetic symbol vanishes on a sphere.

Weak-coupling asymptotics are computed through surface operators on the zero
set of the symbol and checked against Birman-Schwinger solves on graded
momentum grids.
"""
__version__ = "0.1.0"

from .symbols import KineticSymbol, MomentumGrid, SurfaceQuadrature, build_momentum_grid, build_surface_quadrature  # noqa: E402
from .potentials import Potential, hypothesis_report  # noqa: E402
from .surface_ops import SurfaceOperatorSet, assemble_VS, assemble_WS, f_of_e, g_of_e  # noqa: E402
from .bs_solver import BSContext, SolveRecord, direct_spectrum, solve_e  # noqa: E402

__all__ = [
    "KineticSymbol", "MomentumGrid", "SurfaceQuadrature", "build_momentum_grid",
    "build_surface_quadrature", "Potential", "hypothesis_report", "SurfaceOperatorSet",
    "assemble_VS", "assemble_WS", "f_of_e", "g_of_e", "BSContext", "SolveRecord",
    "direct_spectrum", "solve_e",
]
