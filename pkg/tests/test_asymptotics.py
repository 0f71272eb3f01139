import math

import numpy as np
import pytest
from scipy import special

from degenspec.asymptotics import (
    calibrate_lambda_range, counting_check, engineered_kernel_potential, first_order_sweep,
    fit_power_law, kernel_case_check, resolved_surface_count, second_order_sweep,
    subspace_distance, surface_count_growth,
)
from degenspec.bs_solver import BSContext, bs_eigenvalues, solve_e
from degenspec.surface_ops import SurfaceOperatorSet, assemble_VS, surface_spectrum
from degenspec.symbols import KineticSymbol


@pytest.fixture(scope="module")
def small_ctx(bcs2d, gauss2d, small_grid, quad2d):
    return BSContext(bcs2d, gauss2d, small_grid, 1.0, quad2d)


@pytest.fixture(scope="module")
def small_ops(quad2d, gauss2d):
    return SurfaceOperatorSet.build(quad2d, gauss2d, with_ws=False)


def test_calibration_hits_endpoints(small_ctx):
    lams = calibrate_lambda_range(small_ctx, e_hi=0.1, e_lo=3e-3)
    assert len(lams) >= 5 and np.all(np.diff(lams) < 0)
    assert bs_eigenvalues(small_ctx.with_coupling(lams[0]), 0.1, 1)[0] == pytest.approx(1.0, abs=1e-12)
    assert solve_e(small_ctx.with_coupling(lams[-1])).e == pytest.approx(3e-3, rel=1e-8)
    assert np.allclose(lams[1:] / lams[:-1], lams[1] / lams[0])
    assert lams[1] / lams[0] >= 2 ** -0.5 - 1e-12


def test_sweep_is_deterministic_across_workers(small_ctx, small_ops):
    lams = [1.2, 1.0, 0.8]
    one = first_order_sweep(small_ctx, lams, 1, small_ops, workers=1)
    two = first_order_sweep(small_ctx, lams, 1, small_ops, workers=2)
    assert one.to_csv() == two.to_csv() and one.to_json() == two.to_json()
    assert [row.status for row in one.rows] == ["ok"] * 3
    assert one.to_csv().splitlines()[0] == (
        "lambda,index,e,lambda_f,target,first_order_residual,b_S,second_order_residual,"
        "eigenvector_distance,status")


def test_sweep_marks_unresolved_couplings(small_ctx, small_ops):
    report = first_order_sweep(small_ctx, [1.0, 0.05], 1, small_ops, workers=1)
    assert [row.status for row in report.rows] == ["ok", "no-bound-state"]
    assert not report.passes
    assert len(report.plot_csv().splitlines()) == 2


@pytest.mark.parametrize("bad", [[], [1.0, -0.5], [0.5, 1.0], [1.0, 1.0]])
def test_sweep_rejects_bad_coupling_lists(small_ctx, small_ops, bad):
    with pytest.raises(ValueError):
        first_order_sweep(small_ctx, bad, 1, small_ops)


def test_sweep_needs_negative_surface_eigenvalue(small_ctx, small_ops):
    with pytest.raises(ValueError, match="a < 0"):
        first_order_sweep(small_ctx, [1.0], len(small_ops.a_vals), small_ops)


def test_second_order_needs_ws(small_ctx, small_ops):
    with pytest.raises(ValueError):
        second_order_sweep(small_ctx, [1.0], 1, small_ops)


def test_fit_power_law():
    x = np.geomspace(1e-3, 1e-1, 7)
    assert fit_power_law(x, 3.0 * x**2) == pytest.approx(2.0, abs=1e-12)


def test_subspace_distance(rng):
    basis = rng.standard_normal((20, 3))
    assert subspace_distance(basis @ [1.0, -2.0, 0.5], basis) < 1e-12
    q, _ = np.linalg.qr(basis, mode="complete")
    assert subspace_distance(q[:, 5], basis) == pytest.approx(1.0, abs=1e-12)


def test_resolved_surface_count():
    a = np.array([-0.2, -0.1, -0.01, 0.3])
    # predicted e = 1/expm1(1/(2 lam |a|)) at r = 1
    assert resolved_surface_count(a, 1.0, 1.0, 1e-3) == 2
    assert resolved_surface_count(a, 1.0, 1.0, 1e-30) == 3


def test_surface_count_grows_with_resolution(bcs2d, gauss2d):
    out = surface_count_growth(bcs2d, gauss2d, (4, 8, 16))
    assert out["passes"] and out["counts"] == [4, 8, 16]


def test_counting_direct_dominates_surface(small_ctx, small_ops):
    out = counting_check(small_ctx.with_coupling(0.95), small_ops)
    assert out["passes"] and out["surface_count"] >= 1


def test_engineered_potential_has_radial_kernel(bcs2d, quad2d):
    V = engineered_kernel_potential(bcs2d)
    assert not V.sign_definite
    vals, vecs = surface_spectrum(assemble_VS(quad2d, V))
    # the constant function is an eigenvector with eigenvalue zero
    const = np.sqrt(quad2d.weights) / np.linalg.norm(np.sqrt(quad2d.weights))
    image = assemble_VS(quad2d, V) @ const
    assert np.linalg.norm(image) < 1e-14
    with pytest.raises(ValueError):
        engineered_kernel_potential(KineticSymbol(3, "bcs", 1.0))


def test_kernel_case(bcs2d, quad2d, grid2d):
    V = engineered_kernel_potential(bcs2d)
    ops = SurfaceOperatorSet.build(quad2d, V, bcs2d, grid2d)
    out = kernel_case_check(ops)
    assert out["passes"]
    # the only resolved kernel direction is the constant function
    assert len(out["entries"]) == 1 and out["unresolved"] == out["kernel_dimension"] - 1
    entry = out["entries"][0]
    const = np.sqrt(quad2d.weights) / np.linalg.norm(np.sqrt(quad2d.weights))
    assert abs(entry["vector"] @ const) == pytest.approx(1.0, abs=1e-6)
    assert entry["ws_form"] == pytest.approx(const @ ops.WS @ const, rel=1e-6)
    assert entry["ws_form"] > 1e-3 and abs(entry["a"]) < 1e-14
    assert entry["bs_identity_gap"] < 1e-12


def test_kernel_case_generic_gaussian_has_only_unresolved_modes(ops2d):
    out = kernel_case_check(ops2d)
    assert out["passes"] and out["entries"] == []
    assert out["unresolved"] == out["kernel_dimension"]


def test_surface_eigenvalue_oracle_matches_bessel(ops2d):
    assert ops2d.a_vals[0] == pytest.approx(-math.exp(-1) * special.iv(0, 1) / 2, rel=1e-13)
