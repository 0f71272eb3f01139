import numpy as np
import pytest

from degenspec.kernels import LANCZOS_MIN, CirculantOperator, fourier_norm, potential_operator


def _direct_nystrom(grid, V):
    P, W = grid.nodes, grid.weights
    diff = P[:, None, :] - P[None, :, :]
    sw = np.sqrt(W)
    return fourier_norm(grid.n) * V.fourier(diff) * sw[:, None] * sw[None, :]


@pytest.fixture(scope="module")
def small_op(small_grid, gauss2d):
    return potential_operator(small_grid, gauss2d)


def test_blocks_reproduce_direct_nystrom(small_grid, gauss2d, small_op):
    dense = small_op.dense()
    ref = _direct_nystrom(small_grid, gauss2d)
    assert np.max(np.abs(dense - ref)) <= 1e-13 * np.max(np.abs(ref))


def test_block_spectrum_matches_dense(small_grid, gauss2d, small_op):
    ref = np.sort(np.linalg.eigvalsh(_direct_nystrom(small_grid, gauss2d)))[::-1]
    vals = small_op.eigvalsh()
    assert np.allclose(vals, ref, atol=1e-12)
    assert np.allclose(small_op.eigvalsh(top=5), ref[:5], atol=1e-12)
    low = small_op.eigvalsh_low(4)
    assert np.allclose(low, ref[::-1][:4], atol=1e-12)


def test_matvec_on_matrix_and_vector(small_op, rng):
    dense = small_op.dense()
    X = rng.standard_normal((small_op.size, 3))
    assert np.allclose(small_op.matvec(X), dense @ X, atol=1e-12)
    assert np.allclose(small_op.matvec(X[:, 0]), dense @ X[:, 0], atol=1e-12)


def test_eigh_top_vectors(small_op):
    dense = small_op.dense()
    for val, m, part, x in small_op.eigh_top(4):
        v = small_op.mode_vector(m, x, part)
        assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-12)
        assert np.allclose(dense @ v, val * v, atol=1e-11)


def test_scaled_adds_diagonal(small_op, rng):
    left = rng.uniform(0.5, 1.5, small_op.Q)
    diag = rng.uniform(0.0, 1.0, small_op.Q)
    scaled = small_op.scaled(left, diag, factor=2.0)
    S = np.repeat(left, small_op.n_azimuth)
    ref = np.diag(np.repeat(diag, small_op.n_azimuth)) + 2.0 * S[:, None] * small_op.dense() * S[None, :]
    assert np.allclose(scaled.dense(), ref, atol=1e-12)


def test_lanczos_path_matches_full_solver(rng):
    Q, M = LANCZOS_MIN + 44, 4
    A = rng.standard_normal((M // 2 + 1, Q, Q))
    blocks = A + A.transpose(0, 2, 1)
    op = CirculantOperator(blocks, M)
    full = op.eigvalsh()[:6]
    assert np.allclose(op.eigvalsh(top=6), full, rtol=1e-10)


def test_multiplicities():
    op = CirculantOperator(np.zeros((4, 2, 2)), 6)
    assert [op.multiplicity(m) for m in range(4)] == [1, 2, 2, 1]
    assert op.size == 12
