"""Operators on L^2(S): the surface operator, its lift, and the second-order operator.

Surface vectors are handled in symmetrized coordinates ``sqrt(w_k) u(p_k)``
so that the discrete L^2(S) inner product is the Euclidean one and every
operator is a Hermitian matrix.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .kernels import fourier_norm
from .symbols import KineticSymbol, MomentumGrid, SurfaceQuadrature


class GridResolutionError(RuntimeError):
    """The momentum grid cannot resolve the requested spectral parameter."""


def f_of_e(e, r: float):
    """Divergence rate of the resolvent integral near S.

    2 pi / (r sin(pi/r)) e^{-(r-1)/r} for r > 1 and 2 ln(1 + 1/e) for r = 1.
    """
    if r < 1:
        raise ValueError(f"r must be >= 1, got {r}")
    e = np.asarray(e, dtype=float)
    if np.any(e <= 0):
        raise ValueError("e must be positive")
    if r == 1:
        out = 2.0 * np.log1p(1.0 / e)
    else:
        out = 2.0 * np.pi / (r * np.sin(np.pi / r)) * e ** (-(r - 1.0) / r)
    return float(out) if out.ndim == 0 else out


def f_inverse(value: float, r: float) -> float:
    """The e > 0 with f(e) = value."""
    if value <= 0:
        raise ValueError("f takes only positive values")
    if r == 1:
        half = value / 2.0
        return math.exp(-half) if half > 700.0 else float(1.0 / np.expm1(half))
    c = 2.0 * np.pi / (r * np.sin(np.pi / r))
    return float((c / value) ** (r / (r - 1.0)))


def g_of_e(e, r: float):
    """Growth scale of the regularized remainder: 1, 1 + ln(1 + 1/e), or 1 + e^{2-r}."""
    if r < 1:
        raise ValueError(f"r must be >= 1, got {r}")
    e = np.asarray(e, dtype=float)
    if r < 2:
        out = np.ones_like(e)
    elif r == 2:
        out = 1.0 + np.log1p(1.0 / e)
    else:
        out = 1.0 + e ** (2.0 - r)
    return float(out) if out.ndim == 0 else out


# -- surface operator -------------------------------------------------------

def hermitize(K: np.ndarray) -> np.ndarray:
    return 0.5 * (K + K.conj().T)


def assemble_VS(quad: SurfaceQuadrature, V) -> np.ndarray:
    """Nystrom matrix of the surface operator on S (symmetrized)."""
    if quad.level != 0:
        raise ValueError("the surface operator lives on S (level 0)")
    s = quad.sym_factor()
    diff = quad.nodes[:, None, :] - quad.nodes[None, :, :]
    K = fourier_norm(quad.dim) * V.fourier(diff) * s[:, None] * s[None, :]
    return hermitize(K)


def surface_spectrum(K: np.ndarray, count: int | None = None):
    """Lowest ``count`` eigenpairs (ascending) with orthonormal eigenvectors."""
    N = K.shape[0]
    count = N if count is None else count
    if count > N:
        raise ValueError(f"requested {count} eigenpairs from a {N}x{N} matrix")
    vals, vecs = np.linalg.eigh(K)
    return vals[:count], vecs[:, :count]


def apply_FS_adjoint(quad: SurfaceQuadrature, u: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Lift of surface function values ``u`` to position space at points ``x``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    amp = quad.weights * np.asarray(u) / np.sqrt(quad.gradnorms)
    out = np.empty(len(x), dtype=complex)
    for start in range(0, len(x), 2048):
        phase = np.exp(1j * x[start:start + 2048] @ quad.nodes.T)
        out[start:start + 2048] = phase @ amp
    return fourier_norm(quad.dim) * out


def lift_coords(quad: SurfaceQuadrature, coords: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Position-space lift of symmetrized surface vectors, one column per vector."""
    coords = np.asarray(coords)
    cols = coords[:, None] if coords.ndim == 1 else coords
    out = np.stack([apply_FS_adjoint(quad, quad.to_function(c), x) for c in cols.T], axis=1)
    return out[:, 0] if coords.ndim == 1 else out


# -- second-order operator --------------------------------------------------

def surface_to_grid(quad: SurfaceQuadrature, V, grid: MomentumGrid, chunk: int = 4096) -> np.ndarray:
    """Matrix E (grid x surface): sqrt(W_m) (2 pi)^{-n/2} sqrt(w_k/g_k) vhat(p_m - p_k).

    Column k is the momentum profile of V F_S^* applied to the k-th surface
    basis vector, in grid-symmetrized coordinates.
    """
    P = grid.nodes
    sw = np.sqrt(grid.weights)
    s = quad.sym_factor()
    E = np.empty((len(P), quad.size), dtype=float if _real_vhat(V) else complex)
    for start in range(0, len(P), chunk):
        diff = P[start:start + chunk, None, :] - quad.nodes[None, :, :]
        E[start:start + chunk] = V.fourier(diff) * sw[start:start + chunk, None]
    return E * (fourier_norm(grid.n) * s[None, :])


def _real_vhat(V) -> bool:
    return not (V.kind == "tabulated" and V.table_im is not None)


def check_resolves(grid: MomentumGrid, e: float) -> None:
    if e < grid.e_min * (1 - 1e-12):
        raise GridResolutionError(
            f"grid resolves e >= {grid.e_min:g}; requested e = {e:g}")


def grid_kinetic(sym: KineticSymbol, grid: MomentumGrid) -> np.ndarray:
    """T - delta at every grid node."""
    return np.repeat(sym.eval_T0_radial(grid.radii), len(grid.angular_weights))


def assemble_Q(quad: SurfaceQuadrature, V, sym: KineticSymbol, e: float,
               grid: MomentumGrid, E: np.ndarray | None = None) -> np.ndarray:
    """Surface matrix of F_S V (T + e)^{-1} V F_S^*."""
    check_resolves(grid, e)
    if E is None:
        E = surface_to_grid(quad, V, grid)
    d = 1.0 / (grid_kinetic(sym, grid) + e)
    Q = E.conj().T @ (d[:, None] * E)
    return hermitize(Q)


@dataclass
class WSExtrapolation:
    matrix: np.ndarray
    e_sequence: tuple
    samples: list = field(repr=False)
    residuals: list
    basis: str

    @property
    def residuals_decreasing(self) -> bool:
        # exact zeros (zero potential) count as converged
        return all(b < a or a == b == 0.0 for a, b in zip(self.residuals, self.residuals[1:]))


def extrapolation_exponents(r: float) -> list:
    """Powers of e in the error model of W(e) - W(0) for 1 <= r < 2."""
    # level-set contributions are even in the signed level, so the first
    # correction comes from the t^2 term: e^{(3-r)/r} when r > 3/2
    if r < 1.5:
        return [1.0, 2.0]
    if r == 1.5:
        return ["elog", 1.0]
    return [(3.0 - r) / r, 1.0]


def richardson(values: list, e_seq, r: float):
    """Least-squares limit e -> 0 of matrix samples under the model of ``extrapolation_exponents``."""
    e_seq = np.asarray(e_seq, dtype=float)
    cols = [np.ones_like(e_seq)]
    for p in extrapolation_exponents(r):
        cols.append(e_seq * np.log(e_seq) if p == "elog" else e_seq ** p)
    A = np.stack(cols, axis=1)
    Y = np.stack([v.ravel() for v in values], axis=0)
    coef, *_ = np.linalg.lstsq(A, Y, rcond=None)
    return coef[0].reshape(values[0].shape)


def default_e_sequence(count: int = 4) -> tuple:
    return tuple(1e-2 * 4.0 ** (-j) for j in range(count))


def assemble_WS(quad: SurfaceQuadrature, V, sym: KineticSymbol, grid: MomentumGrid,
                e_sequence=None, K: np.ndarray | None = None) -> WSExtrapolation:
    """Second-order surface operator as the e -> 0 limit of Q_e - f(e) V_S^2."""
    if sym.r >= 2:
        raise ValueError("the second-order operator requires r < 2")
    e_seq = tuple(default_e_sequence() if e_sequence is None else e_sequence)
    if len(e_seq) < 3 or any(b >= a for a, b in zip(e_seq, e_seq[1:])):
        raise ValueError("e_sequence must be decreasing with at least 3 values")
    if K is None:
        K = assemble_VS(quad, V)
    E = surface_to_grid(quad, V, grid)
    K2 = K @ K
    samples = [hermitize(assemble_Q(quad, V, sym, e, grid, E) - f_of_e(e, sym.r) * K2)
               for e in e_seq]
    residuals = [float(np.linalg.norm(a - b, 2)) for a, b in zip(samples, samples[1:])]
    W = hermitize(richardson(samples, e_seq, sym.r))
    basis = "1," + ",".join(str(p) for p in extrapolation_exponents(sym.r))
    info = WSExtrapolation(W, e_seq, samples, residuals, basis)
    if not info.residuals_decreasing:
        warnings.warn(f"Cauchy residuals of W(e) are not decreasing: {residuals}")
    return info


# -- operator set and B_S ---------------------------------------------------

def subspace_overlap(A: np.ndarray, B: np.ndarray) -> float:
    """Squared Frobenius norm of A^H B divided by the smaller dimension (1 = same span)."""
    A = A[:, None] if A.ndim == 1 else A
    B = B[:, None] if B.ndim == 1 else B
    return float(np.linalg.norm(A.conj().T @ B) ** 2 / min(A.shape[1], B.shape[1]))


def group_degenerate(vals: np.ndarray, tol: float = 1e-8) -> list:
    """Index groups of (sorted) eigenvalues that agree within ``tol`` relative to the spectrum scale."""
    scale = max(float(np.max(np.abs(vals))), 1e-300) if len(vals) else 1.0
    groups, cur = [], [0] if len(vals) else []
    for i in range(1, len(vals)):
        if abs(vals[i] - vals[cur[-1]]) <= tol * scale:
            cur.append(i)
        else:
            groups.append(cur)
            cur = [i]
    if cur:
        groups.append(cur)
    return groups


@dataclass
class SurfaceOperatorSet:
    quad: SurfaceQuadrature
    VS: np.ndarray
    WS: np.ndarray | None = None
    ws_info: WSExtrapolation | None = field(default=None, repr=False)

    def __post_init__(self):
        self.a_vals, self.a_vecs = surface_spectrum(self.VS)

    @classmethod
    def build(cls, quad, V, sym=None, grid=None, e_sequence=None, with_ws=True):
        K = assemble_VS(quad, V)
        info = None
        if with_ws:
            info = assemble_WS(quad, V, sym, grid, e_sequence, K=K)
        return cls(quad, K, None if info is None else info.matrix, info)

    @property
    def negative(self) -> np.ndarray:
        return self.a_vals[self.a_vals < 0]

    def eigenspace(self, i: int, tol: float = 1e-8):
        """Value and orthonormal basis of the eigenspace containing the i-th (0-based) eigenvalue."""
        for grp in group_degenerate(self.a_vals, tol):
            if i in grp:
                return float(np.mean(self.a_vals[grp])), self.a_vecs[:, grp]
        raise IndexError(i)

    def BS(self, lam: float) -> np.ndarray:
        if self.WS is None:
            raise ValueError("second-order operator not assembled")
        return hermitize(self.VS - lam * self.WS)

    def ws_form(self, i: int, tol: float = 1e-8) -> np.ndarray:
        """Matrix (u^(j), W_S u^(l)) over the eigenspace of the i-th eigenvalue."""
        _, U = self.eigenspace(i, tol)
        return hermitize(U.conj().T @ self.WS @ U)


def assemble_BS_surface(ops: SurfaceOperatorSet, lam: float):
    """Eigenpairs of V_S - lam W_S, matched to the V_S eigenvectors.

    Returns (values, vectors, match) where ``match[k]`` is the index of the
    V_S eigenvector with the largest overlap with B_S eigenvector k
    (ties broken by eigenvalue proximity).
    """
    if lam == 0:
        vals, vecs = ops.a_vals.copy(), ops.a_vecs.copy()
        return vals, vecs, np.arange(len(vals))
    vals, vecs = np.linalg.eigh(ops.BS(lam))
    overlap = np.abs(ops.a_vecs.conj().T @ vecs) ** 2
    match = np.empty(len(vals), dtype=int)
    for k in range(len(vals)):
        best = np.max(overlap[:, k])
        cand = np.flatnonzero(overlap[:, k] >= best - 1e-9)
        match[k] = cand[np.argmin(np.abs(ops.a_vals[cand] - vals[k]))]
    return vals, vecs, match
