"""Birman-Schwinger solves, the regularized resolvent M_e and the reduced surface operator.

For attractive V (V <= 0) the Birman-Schwinger operator is realized in
momentum space as the positive matrix

    lam (T + e)^{-1/2} |V|^ (T + e)^{-1/2},

and -e is an eigenvalue of T + lam V exactly when this matrix has
eigenvalue 1.  All energies are measured from the symbol minimum delta.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .kernels import CirculantOperator, fourier_norm, potential_operator
from .potentials import Potential
from .surface_ops import (
    GridResolutionError, assemble_VS, check_resolves, f_inverse, f_of_e, g_of_e,
    grid_kinetic, hermitize, surface_to_grid,
)
from .symbols import KineticSymbol, MomentumGrid, SurfaceQuadrature, _gl_panels, unit_sphere_rule

__all__ = [
    "BSContext", "SolveRecord", "NoBoundStateError", "NeumannDivergenceError",
    "GridResolutionError", "f_of_e", "g_of_e", "f_inverse",
    "assemble_bs_operator", "bs_operator", "bs_eigenvalues", "solve_e",
    "direct_spectrum", "me_quadratic_forms", "me_norm_probe", "m0_limit_residuals",
    "reduced_surface_operator", "residual_spectrum_check", "probe_family",
    "build_uniform_grid", "certify",
]

DENSE_LIMIT = 6000


class NoBoundStateError(RuntimeError):
    """No i-th bound state at this coupling (within the grid's energy range)."""


class NeumannDivergenceError(RuntimeError):
    """The series for (1 + lam M_e)^{-1} does not converge."""


@dataclass
class BSContext:
    sym: KineticSymbol
    V: Potential
    grid: MomentumGrid
    lam: float
    surface: SurfaceQuadrature | None = None
    sign_mode: str = "attractive"
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.sign_mode not in ("attractive", "general"):
            raise ValueError(f"unknown sign mode {self.sign_mode!r}")
        if self.sign_mode == "attractive" and not self.V.is_attractive:
            raise ValueError("attractive mode requires V <= 0")
        if self.lam < 0:
            raise ValueError("coupling must be non-negative")

    def with_coupling(self, lam: float) -> "BSContext":
        return BSContext(self.sym, self.V, self.grid, lam, self.surface, self.sign_mode, self._cache)

    @property
    def vop(self) -> CirculantOperator:
        """Symmetrized convolution by (2 pi)^{-n/2} vhat on the grid."""
        if "vop" not in self._cache:
            self._cache["vop"] = potential_operator(self.grid, self.V)
        return self._cache["vop"]

    @property
    def kinetic(self) -> np.ndarray:
        """T - delta per meridional index."""
        if "kin" not in self._cache:
            self._cache["kin"] = self.sym.eval_T0_radial(self.grid.meridional_radii())
        return self._cache["kin"]

    @property
    def E(self) -> np.ndarray:
        if "E" not in self._cache:
            self._cache["E"] = surface_to_grid(self.require_surface(), self.V, self.grid)
        return self._cache["E"]

    @property
    def VS(self) -> np.ndarray:
        if "VS" not in self._cache:
            self._cache["VS"] = assemble_VS(self.require_surface(), self.V)
        return self._cache["VS"]

    def require_surface(self) -> SurfaceQuadrature:
        if self.surface is None:
            raise ValueError("this operation needs a surface quadrature in the context")
        return self.surface


@dataclass(frozen=True)
class SolveRecord:
    lam: float
    index: int
    e: float
    bs_eigenvalue_residual: float
    bracket: tuple
    grid_id: str
    delta: float = 0.0

    @property
    def energy(self) -> float:
        """Eigenvalue of H = T + lam V, i.e. delta - e."""
        return self.delta - self.e

    def f_value(self, r: float) -> float:
        return f_of_e(self.e, r)


# -- Birman-Schwinger operator ----------------------------------------------

def _require_attractive(ctx: BSContext) -> None:
    if ctx.sign_mode != "attractive":
        raise ValueError("the Birman-Schwinger path needs attractive V; use direct_spectrum")


def bs_operator(ctx: BSContext, e: float) -> CirculantOperator:
    """Block form of lam (T+e)^{-1/2} |V|^ (T+e)^{-1/2} on the grid."""
    _require_attractive(ctx)
    check_resolves(ctx.grid, e)
    s = 1.0 / np.sqrt(ctx.kinetic + e)
    return ctx.vop.scaled(s, factor=-ctx.lam)


def assemble_bs_operator(ctx: BSContext, e: float) -> np.ndarray:
    """Dense Birman-Schwinger matrix (grid-symmetrized)."""
    if ctx.grid.size > DENSE_LIMIT:
        raise MemoryError(f"dense assembly of {ctx.grid.size} nodes exceeds {DENSE_LIMIT}; "
                          "use bs_eigenvalues")
    return bs_operator(ctx, e).dense()


def bs_eigenvalues(ctx: BSContext, e: float, count: int = 5) -> np.ndarray:
    """Largest ``count`` Birman-Schwinger eigenvalues, descending."""
    return bs_operator(ctx, e).eigvalsh(top=count)


def _first_order_guess(ctx: BSContext, a_S: float | None) -> float | None:
    if a_S is None or a_S >= 0 or ctx.lam <= 0:
        return None
    return f_inverse(1.0 / (ctx.lam * abs(a_S)), ctx.sym.r)


def solve_e(ctx: BSContext, i: int = 1, bracket: tuple | None = None,
            a_S: float | None = None, tol: float = 1e-8) -> SolveRecord:
    """Find e with the i-th largest BS eigenvalue equal to 1.

    The eigenvalue is strictly decreasing in e, so the root is unique; it is
    bracketed in log e and refined by Brent's method (bisection with secant
    and inverse-quadratic steps).
    """
    _require_attractive(ctx)
    e_floor = ctx.grid.e_min

    def mu(e):
        return bs_eigenvalues(ctx, e, count=i)[i - 1]

    if ctx.lam == 0 or ctx.V.is_zero:
        raise NoBoundStateError(f"no bound state #{i}: zero coupling or zero potential")
    if bracket is None:
        guess = _first_order_guess(ctx, a_S)
        if guess is None:
            lo, hi = e_floor, 1.0
        else:
            lo, hi = max(guess / 100.0, e_floor), guess * 100.0
    else:
        lo, hi = bracket
        lo = max(lo, e_floor)
    mu_lo = mu(lo)
    if mu_lo < 1.0:
        if lo > e_floor:
            lo = e_floor
            mu_lo = mu(lo)
        if mu_lo < 1.0:
            raise NoBoundStateError(
                f"no bound state #{i} at lambda={ctx.lam:g} with e >= {e_floor:g} "
                f"(mu_{i}(e_min) = {mu_lo:.6g})")
    mu_hi = mu(hi)
    grow = 0
    while mu_hi > 1.0:
        hi *= 100.0
        mu_hi = mu(hi)
        grow += 1
        if grow > 12:
            raise GridResolutionError("failed to bracket the Birman-Schwinger root from above")
    log_e = brentq(lambda le: mu(math.exp(le)) - 1.0, math.log(lo), math.log(hi),
                   xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    e = math.exp(log_e)
    resid = abs(mu(e) - 1.0)
    if resid > tol:
        warnings.warn(f"BS residual {resid:.3g} above tolerance {tol:g}")
    return SolveRecord(float(ctx.lam), int(i), float(e), float(resid), (float(lo), float(hi)),
                       ctx.grid.fingerprint(), float(ctx.sym.delta))


def bs_eigenvector(ctx: BSContext, e: float, i: int = 1):
    """Unit grid vector of the i-th largest BS eigenvalue, with that eigenvalue."""
    op = bs_operator(ctx, e)
    val, m, part, x = op.eigh_top(i)[i - 1]
    return float(val), op.mode_vector(m, x, part)


def psi_hat(ctx: BSContext, e: float, i: int = 1) -> np.ndarray:
    """Momentum-space bound state at grid nodes, psi^ = (T+e)^{-1/2} y / sqrt(W)."""
    _, y = bs_eigenvector(ctx, e, i)
    d = np.repeat(1.0 / np.sqrt(ctx.kinetic + e), ctx.grid.n_azimuth)
    return d * y / np.sqrt(ctx.grid.weights)


# -- direct Hamiltonian -----------------------------------------------------

def direct_spectrum(ctx: BSContext, count: int = 5) -> np.ndarray:
    """Lowest eigenvalues of the Nystrom matrix of T - delta + lam V (any sign of V)."""
    op = ctx.vop.scaled(np.ones(ctx.grid.n_meridional), diag=ctx.kinetic, factor=ctx.lam)
    return op.eigvalsh_low(count)


def build_uniform_grid(sym: KineticSymbol, cutoff: float = 8.0, panels: int = 40,
                       order: int = 8, angular: int = 32, e_min: float = 1e-2) -> MomentumGrid:
    """Ungraded polar grid: equal Gauss-Legendre panels in rho, split at the Fermi radius.

    Used as an independent discretization for cross-checks at moderate e.
    """
    rho0 = sym.fermi_radius
    n_in = max(2, int(round(panels * rho0 / cutoff)))
    edges = np.concatenate([np.linspace(0.0, rho0, n_in + 1),
                            np.linspace(rho0, cutoff, panels - n_in + 1)[1:]])
    rho, w = _gl_panels(edges, order)
    dirs, w_ang, n_az = unit_sphere_rule(sym.n, angular if sym.n == 2 else max(angular // 2, 2))
    return MomentumGrid(sym.n, rho, w * rho ** (sym.n - 1), dirs, w_ang, n_az, float(e_min),
                        float(cutoff), np.array([0.0]), np.zeros(len(rho), bool), order=order)


# -- regularized resolvent M_e ------------------------------------------------

@dataclass(frozen=True)
class Probe:
    center: tuple
    width: float
    wavevector: tuple

    def norm2(self, n: int) -> float:
        return (math.pi * self.width**2) ** (n / 2.0)


def probe_family(n: int) -> list:
    """Gaussian wave packets exp(-|x-c|^2/(2 s^2) + i k.x) with varied c, s, k."""
    unit = [tuple(float(j == d) for j in range(n)) for d in range(n)]
    zero = tuple(0.0 for _ in range(n))
    centers = [zero, unit[0], tuple(2.0 * v for v in unit[-1])]
    wavevectors = [zero, unit[0], tuple(0.5 * v for v in unit[1])]
    return [Probe(c, s, k) for c in centers for s in (0.7, 1.0, 2.0) for k in wavevectors]


def _phi_hat_sq(V: Potential, probe: Probe, p: np.ndarray) -> np.ndarray:
    """|FT(|V|^{1/2} psi)|^2 at momenta p for a Gaussian wave packet psi."""
    n = p.shape[-1]
    c = np.asarray(probe.center)
    k = np.asarray(probe.wavevector)
    s2 = probe.width**2
    if V.kind == "gaussian":
        A, w = abs(V.amplitudes[0]), V.widths[0]
        if A == 0:
            return np.zeros(p.shape[:-1])
        alpha = 1.0 / (2.0 * w * w) + 1.0 / s2
        cc = float(c @ c)
        q2 = np.sum((p - k) ** 2, axis=-1)
        return A * alpha ** (-n) * np.exp(-cc / s2 + (cc / s2**2 - q2) / alpha)
    return np.abs(_phi_hat_numeric(V, probe, p)) ** 2


def _phi_hat_numeric(V: Potential, probe: Probe, p: np.ndarray, half_width: float = 10.0,
                     points: int = 64) -> np.ndarray:
    n = p.shape[-1]
    ax = np.linspace(-half_width, half_width, points)
    dx = ax[1] - ax[0]
    X = np.stack(np.meshgrid(*([ax] * n), indexing="ij"), axis=-1).reshape(-1, n)
    c, k = np.asarray(probe.center), np.asarray(probe.wavevector)
    phi = np.sqrt(np.abs(V.value(X))) * np.exp(-np.sum((X - c) ** 2, axis=1) / (2 * probe.width**2)
                                                 + 1j * X @ k)
    flat = p.reshape(-1, n)
    out = np.empty(len(flat), dtype=complex)
    for start in range(0, len(flat), 1024):
        out[start:start + 1024] = np.exp(-1j * flat[start:start + 1024] @ X.T) @ phi
    return (fourier_norm(n) * dx**n * out).reshape(p.shape[:-1])


def me_quadratic_forms(ctx: BSContext, e: float, probes=None) -> np.ndarray:
    """Rayleigh quotients (psi, M~_e psi) / |psi|^2 over a probe family.

    (psi, M~_e psi) = int |phi^|^2 / (T + e) dp - f(e) int_S |phi^|^2 / |grad P| dS,
    phi = |V|^{1/2} psi.
    """
    _require_attractive(ctx)
    check_resolves(ctx.grid, e)
    quad = ctx.require_surface()
    probes = probe_family(ctx.grid.n) if probes is None else probes
    P, W = ctx.grid.nodes, ctx.grid.weights
    d = 1.0 / (grid_kinetic(ctx.sym, ctx.grid) + e)
    fe = f_of_e(e, ctx.sym.r)
    out = []
    for pr in probes:
        bulk = np.dot(W * d, _phi_hat_sq(ctx.V, pr, P))
        surf = np.dot(quad.weights / quad.gradnorms, _phi_hat_sq(ctx.V, pr, quad.nodes))
        out.append((bulk - fe * surf) / pr.norm2(ctx.grid.n))
    return np.array(out)


def me_norm_probe(ctx: BSContext, e: float, probes=None) -> float:
    """Lower bound on ||M_e|| from the probe family."""
    if ctx.V.is_zero:
        return 0.0
    return float(np.max(np.abs(me_quadratic_forms(ctx, e, probes))))


def m0_limit_residuals(ctx: BSContext, e_sequence, probes=None) -> list:
    """Probe-family distances between M~_e at consecutive e (r < 2 only)."""
    if ctx.sym.r >= 2:
        raise ValueError("the limit M_0 exists only for r < 2")
    forms = [me_quadratic_forms(ctx, e, probes) for e in e_sequence]
    return [float(np.max(np.abs(a - b))) for a, b in zip(forms, forms[1:])]


# -- reduced operator on L^2(S) ----------------------------------------------

def reduced_surface_operator(ctx: BSContext, e: float, tol: float = 1e-10,
                             max_terms: int = 200, return_terms: bool = False):
    """lam f(e) (V_S + F_S G(lam, e) F_S^*) via the Neumann series of (1 + lam M_e)^{-1}.

    With R = (T+e)^{-1} - f(e) F_S^* F_S, the correction is
    sum_{k>=1} (-lam)^k F_S (V R)^k V F_S^*.  Grid functions are carried
    together with their restriction to S so that F_S never has to be
    interpolated.
    """
    _require_attractive(ctx)
    check_resolves(ctx.grid, e)
    lam, fe = ctx.lam, f_of_e(e, ctx.sym.r)
    K, E = ctx.VS, ctx.E
    d = np.repeat(1.0 / (ctx.kinetic + e), ctx.grid.n_azimuth)
    Xg = E.copy()                    # V F_S^* u on the grid
    Xs = K.copy()                    # its restriction F_S V F_S^* u
    correction = np.zeros_like(K)
    norms = []
    coef = 1.0
    for k in range(1, max_terms + 1):
        DX = d[:, None] * Xg
        Xg, Xs = ctx.vop.matvec(DX) - fe * (E @ Xs), E.conj().T @ DX - fe * (K @ Xs)
        coef *= -lam
        term = coef * Xs
        correction += term
        norms.append(float(np.linalg.norm(term, 2)))
        if norms[-1] < tol * max(1.0, np.linalg.norm(K, 2)):
            break
        if k >= 4 and norms[-1] > norms[-2] > norms[-3]:
            raise NeumannDivergenceError(
                f"Neumann terms grow at lambda={lam:g}, e={e:g}: {norms[-3:]}")
    else:
        raise NeumannDivergenceError(f"Neumann series not converged in {max_terms} terms")
    out = hermitize(lam * fe * (K + correction))
    return (out, norms) if return_terms else out


# -- separation of surface-driven bound states -------------------------------

def residual_spectrum_check(ctx: BSContext, a_values, solved=(), c_sep: float = 0.1,
                            ladder: int = 6) -> dict:
    """Count bound states deeper than the separation energy and compare with V_S.

    The probe energy e_sep solves lam^2 f(e_sep) = c_sep (raised to the grid
    floor); bound states not driven by a negative surface eigenvalue lie
    below it for small lam.
    """
    lam, r = ctx.lam, ctx.sym.r
    floor = ctx.grid.e_min * 10.0
    a_values = np.asarray(a_values, dtype=float)
    if ctx.V.is_zero or lam == 0:
        return {"e_probe": None, "bs_count": 0, "surface_count": 0, "passes": True,
                "ladder": [], "monotone": True}
    e_sep = f_inverse(c_sep / lam**2, r)
    e_probe = max(e_sep, floor)
    predicted = [f_inverse(1.0 / (lam * abs(a)), r) for a in a_values if a < 0]
    surface_count = sum(1 for p in predicted if p > e_probe)
    vals = bs_eigenvalues(ctx, e_probe, count=max(surface_count + 3, 5))
    bs_count = int(np.sum(vals > 1.0))
    es = np.geomspace(e_probe, floor, ladder) if e_probe > floor else np.array([e_probe])
    counts = [int(np.sum(bs_eigenvalues(ctx, x, count=max(surface_count + 8, 10)) > 1.0)) for x in es]
    return {
        "e_probe": float(e_probe), "bs_count": bs_count, "surface_count": surface_count,
        "solved_deeper": sum(1 for rec in solved if rec.e > e_probe),
        "passes": bs_count == surface_count,
        "ladder": list(zip(map(float, es), counts)),
        "monotone": all(b >= a for a, b in zip(counts, counts[1:])),
    }


# -- refinement certificate ---------------------------------------------------

def refine_grid(sym: KineticSymbol, grid: MomentumGrid) -> MomentumGrid:
    """Once-refined graded grid: more shells, higher panel order, 1.5x azimuths."""
    from .symbols import build_momentum_grid
    return build_momentum_grid(sym, grid.e_min, cutoff=grid.cutoff, shells=len(grid.levels) + 3,
                               angular=int(round(grid.n_azimuth * 0.75)) * 2,
                               order=grid.order + 2, ratio=grid.ratio,
                               outer_panels=grid.outer_panels + 2, core_panels=grid.core_panels)


def certify(ctx: BSContext, record: SolveRecord, grid: MomentumGrid | None = None,
            gate: float = 0.02) -> dict:
    """Re-solve on a refined grid and report the relative change of e."""
    fine = grid if grid is not None else refine_grid(ctx.sym, ctx.grid)
    fine_ctx = BSContext(ctx.sym, ctx.V, fine, ctx.lam, ctx.surface, ctx.sign_mode)
    lo, hi = record.e / 10.0, record.e * 10.0
    fine_rec = solve_e(fine_ctx, record.index, bracket=(lo, hi))
    rel = abs(fine_rec.e - record.e) / record.e
    return {"e": record.e, "e_refined": fine_rec.e, "relative_change": rel,
            "passes": rel <= gate, "refined_grid": fine.fingerprint()}
