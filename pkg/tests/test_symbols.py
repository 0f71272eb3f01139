import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from degenspec.symbols import (
    KineticSymbol, build_momentum_grid, build_surface_quadrature, load_surface_quadrature,
    save_surface_quadrature, unit_sphere_rule,
)


@settings(max_examples=60, deadline=None)
@given(mu=st.floats(0.2, 4.0), t_frac=st.floats(0.0, 0.99), side=st.sampled_from(["inner", "outer"]))
def test_level_radius_roundtrip_bcs(mu, t_frac, side):
    sym = KineticSymbol(2, "bcs", 1.0, mu=mu)
    t = t_frac * sym.tau
    rho = sym.level_radius(t, side)
    assert abs(float(sym.profile(rho))) == pytest.approx(t, abs=1e-12)
    if side == "outer":
        assert rho >= sym.fermi_radius
    else:
        assert rho <= sym.fermi_radius


@settings(max_examples=40, deadline=None)
@given(t_frac=st.floats(0.0, 0.99), side=st.sampled_from(["inner", "outer"]))
def test_level_radius_roundtrip_custom(t_frac, side):
    # P(rho) = rho^3 - 2 vanishes at 2^(1/3)
    sym = KineticSymbol(3, "custom-radial", 1.0, coeffs=(-2.0, 0.0, 0.0, 1.0))
    assert sym.fermi_radius == pytest.approx(2 ** (1 / 3), rel=1e-13)
    t = t_frac * sym.tau
    rho = sym.level_radius(t, side)
    assert abs(float(sym.profile(rho))) == pytest.approx(t, abs=1e-12)


def test_symbol_defaults():
    bcs = KineticSymbol(2, "bcs", 1.0, mu=1.0)
    assert bcs.tau == 0.5 and bcs.s == 2.0 and bcs.c2 == pytest.approx(0.25)
    assert bcs.c1 > 0 and bcs.growth_violation() <= 0
    roton = KineticSymbol(2, "roton", 2.0, p0=1.0, mass=0.5, delta=0.5)
    assert roton.s == 2.0 and roton.fermi_radius == 1.0
    assert roton.eval_T(np.array([[1.0, 0.0]]))[0] == pytest.approx(0.5)
    assert roton.check_gradient() == pytest.approx(1.0)


@pytest.mark.parametrize("kwargs", [
    dict(n=1), dict(n=2, r=0.5), dict(n=2, delta=-1.0), dict(n=2, mu=-1.0),
    dict(n=2, kind="unknown"), dict(n=2, kind="custom-radial", coeffs=(0.0, 1.0)),
])
def test_symbol_rejects_bad_input(kwargs):
    with pytest.raises(ValueError):
        KineticSymbol(**kwargs)


@pytest.mark.parametrize("n,res", [(2, 16), (3, 8)])
def test_unit_sphere_rule_integrates_polynomials(n, res):
    dirs, w, _ = unit_sphere_rule(n, res)
    area = 2 * math.pi if n == 2 else 4 * math.pi
    assert w.sum() == pytest.approx(area, rel=1e-14)
    # second moments: area / n for each coordinate squared
    assert np.sum(w * dirs[:, 0] ** 2) == pytest.approx(area / n, rel=1e-13)
    assert np.sum(w * dirs[:, -1] ** 4) == pytest.approx(3 * area / (n * (n + 2)), rel=1e-13)


@pytest.mark.parametrize("n", [2, 3])
def test_surface_measure(n):
    sym = KineticSymbol(n, "bcs", 1.0, mu=2.0)
    quad = build_surface_quadrature(sym, 0.0, 12)
    R = math.sqrt(2.0)
    expected = 2 * math.pi * R if n == 2 else 4 * math.pi * R**2
    assert quad.measure == pytest.approx(expected, rel=1e-13)
    assert np.allclose(np.linalg.norm(quad.nodes, axis=1), R)
    assert np.allclose(quad.gradnorms, 2 * R)


def test_level_set_quadrature_has_two_spheres():
    sym = KineticSymbol(2, "bcs", 1.0, mu=1.0)
    quad = build_surface_quadrature(sym, 0.2, 8)
    radii = np.unique(np.round(np.linalg.norm(quad.nodes, axis=1), 12))
    assert np.allclose(sorted(radii), [math.sqrt(0.8), math.sqrt(1.2)])
    with pytest.raises(ValueError):
        build_surface_quadrature(sym, 0.6, 8)


@pytest.mark.parametrize("n", [2, 3])
def test_coarea_grid_volume_and_moment(n):
    sym = KineticSymbol(n, "bcs", 1.0, mu=1.0)
    grid = build_momentum_grid(sym, 1e-4, angular=16)
    rho = np.linalg.norm(grid.nodes, axis=1)
    unit = 2 * math.pi if n == 2 else 4 * math.pi
    # volume of the tau-neighbourhood: ball(sqrt(1.5)) minus ball(sqrt(0.5))
    inside = np.abs(sym.profile(rho)) <= sym.tau
    vol = grid.integrate(inside.astype(float))
    exact = unit / n * (1.5 ** (n / 2) - 0.5 ** (n / 2))
    assert abs(vol - exact) / exact < 1e-6
    gauss = grid.integrate(np.exp(-rho**2))
    assert abs(gauss - math.pi ** (n / 2)) / math.pi ** (n / 2) < 1e-6


@pytest.mark.parametrize("e", [1e-1, 1e-3, 1e-5])
def test_grid_resolvent_integral_matches_adaptive_quadrature(bcs2d, e):
    grid = build_momentum_grid(bcs2d, 1e-5, angular=8)
    rho = np.linalg.norm(grid.nodes, axis=1)
    num = grid.integrate(1.0 / (bcs2d.eval_T0_radial(rho) + e))
    ref = 2 * math.pi * integrate.quad(lambda x: x / (abs(x * x - 1) + e), 0, grid.cutoff,
                                       points=[1.0], limit=400, epsabs=0, epsrel=1e-12)[0]
    assert abs(num - ref) / ref < 1e-6


def test_auto_shells_reach_requested_floor(bcs2d):
    grid = build_momentum_grid(bcs2d, 1e-6)
    assert grid.levels[-1] <= 1e-7 * (1 + 1e-12)
    assert grid.summary()["t_min"] == grid.levels[-1]
    with pytest.raises(ValueError, match="increase shells"):
        build_momentum_grid(bcs2d, 1e-6, shells=3)
    with pytest.raises(ValueError):
        build_momentum_grid(bcs2d, 1e-3, cutoff=1.0)


def test_surface_quadrature_roundtrip(tmp_path):
    sym = KineticSymbol(3, "bcs", 1.0, mu=1.0)
    quad = build_surface_quadrature(sym, 0.0, 6)
    path = tmp_path / "quad.csv"
    save_surface_quadrature(quad, path)
    back = load_surface_quadrature(path)
    assert np.array_equal(back.nodes, quad.nodes)
    assert np.array_equal(back.weights, quad.weights)
    assert np.array_equal(back.gradnorms, quad.gradnorms)


def test_surface_quadrature_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x,y,w,g\n1,0,1,1\n")
    with pytest.raises(ValueError, match="header"):
        load_surface_quadrature(path)
