"""Degenerate kinetic symbols and quadratures adapted to their zero set.

A symbol is ``T(p) = |P(|p|)|**r + delta`` with a radial profile ``P`` that
vanishes on a sphere ``S`` (the Fermi-like surface).  Three kinds exist:

``bcs``            P(rho) = rho**2 - mu
``roton``          P(rho) = (rho - p0) / sqrt(2 m)
``custom-radial``  P(rho) = polynomial in rho (coefficients, lowest first)

All spectral work is done with ``delta`` subtracted; ``eval_T`` reports the
full value.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.optimize import brentq

KINDS = ("bcs", "roton", "custom-radial")


@dataclass(frozen=True)
class KineticSymbol:
    n: int
    kind: str = "bcs"
    r: float = 1.0
    mu: float = 1.0
    p0: float = 1.0
    mass: float = 0.5
    delta: float = 0.0
    coeffs: tuple = ()
    tau: float | None = None
    s: float | None = None
    c1: float | None = None
    c2: float | None = None

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"dimension must be >= 2, got {self.n}")
        if self.kind not in KINDS:
            raise ValueError(f"unknown symbol kind {self.kind!r}")
        if not self.r >= 1.0:
            raise ValueError(f"exponent r must be >= 1, got {self.r}")
        if self.delta < 0:
            raise ValueError("energy offset delta must be >= 0")
        if self.kind == "bcs" and self.mu <= 0:
            raise ValueError("bcs symbol needs mu > 0")
        if self.kind == "roton" and (self.p0 <= 0 or self.mass <= 0):
            raise ValueError("roton symbol needs p0 > 0 and mass > 0")
        if self.kind == "custom-radial":
            if len(self.coeffs) < 2:
                raise ValueError("custom-radial symbol needs polynomial coefficients")
            object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))
            if self.profile(0.0) == 0.0:
                raise ValueError("custom-radial profile must not vanish at the origin")
        # resolve defaults once so they can be echoed in manifests
        if self.tau is None:
            object.__setattr__(self, "tau", self._default_tau())
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.s is None:
            object.__setattr__(self, "s", self._default_growth_exponent())
        if self.c2 is None:
            object.__setattr__(self, "c2", 0.5 * self.tau**self.r)
        if self.c1 is None:
            object.__setattr__(self, "c1", self._default_c1())

    # -- radial profile -------------------------------------------------
    def profile(self, rho):
        rho = np.asarray(rho, dtype=float)
        if self.kind == "bcs":
            return rho**2 - self.mu
        if self.kind == "roton":
            return (rho - self.p0) / math.sqrt(2.0 * self.mass)
        return npoly.polyval(rho, self.coeffs)

    def dprofile(self, rho):
        rho = np.asarray(rho, dtype=float)
        if self.kind == "bcs":
            return 2.0 * rho
        if self.kind == "roton":
            return np.full_like(rho, 1.0 / math.sqrt(2.0 * self.mass))
        return npoly.polyval(rho, npoly.polyder(self.coeffs))

    @property
    def fermi_radius(self) -> float:
        """Radius of the zero sphere S."""
        if self.kind == "bcs":
            return math.sqrt(self.mu)
        if self.kind == "roton":
            return self.p0
        return self._custom_root()

    def _custom_root(self) -> float:
        roots = npoly.polyroots(self.coeffs)
        real = sorted(z.real for z in roots if abs(z.imag) < 1e-12 and z.real > 0)
        if not real:
            raise ValueError("custom-radial profile has no positive root")
        return float(real[0])

    def _default_tau(self) -> float:
        # half of |P| at the nearest non-smooth or critical point (the origin)
        return min(1.0, 0.5 * abs(float(self.profile(0.0))))

    def _default_growth_exponent(self) -> float:
        if self.kind == "bcs":
            return 2.0 * self.r
        if self.kind == "roton":
            return float(self.r)
        return float(len(self.coeffs) - 1) * self.r

    def _default_c1(self) -> float:
        rho = self._exterior_samples()
        excess = (self.eval_T0_radial(rho) - self.c2) / rho**self.s
        return float(0.5 * np.min(excess))

    def _exterior_samples(self, count: int = 4000) -> np.ndarray:
        rho0 = self.fermi_radius
        rho = np.geomspace(1e-3, 100.0 * max(rho0, 1.0), count)
        return rho[np.abs(self.profile(rho)) >= self.tau]

    # -- evaluation -----------------------------------------------------
    def eval_T0_radial(self, rho):
        """|P(rho)|**r, the symbol without its offset."""
        return np.abs(self.profile(rho)) ** self.r

    def eval_T(self, p):
        """Full symbol T(p) = |P(|p|)|**r + delta at points ``p`` (..., n)."""
        rho = np.linalg.norm(np.asarray(p, dtype=float), axis=-1)
        return self.eval_T0_radial(rho) + self.delta

    def gradnorm(self, p):
        rho = np.linalg.norm(np.asarray(p, dtype=float), axis=-1)
        return np.abs(self.dprofile(rho))

    def level_radius(self, t: float, side: str) -> float | None:
        """Radius of the level sphere |P| = t on the ``inner`` or ``outer`` side of S.

        Returns None when the inner sphere does not exist.
        """
        rho0 = self.fermi_radius
        sign = math.copysign(1.0, float(self.dprofile(rho0)))
        if t == 0:
            return rho0
        if self.kind == "bcs":
            if side == "outer":
                return math.sqrt(self.mu + t)
            return math.sqrt(self.mu - t) if t < self.mu else None
        if self.kind == "roton":
            step = t * math.sqrt(2.0 * self.mass)
            if side == "outer":
                return rho0 + step
            return rho0 - step if step < rho0 else None
        target = t * sign if side == "outer" else -t * sign

        def g(x):
            return float(self.profile(x)) - target

        if (g(rho0) * sign >= 0) == (side == "outer"):
            return rho0  # level below the roundoff of the computed root
        if side == "outer":
            hi = rho0 + 1.0
            while g(hi) * sign < 0:
                hi *= 2.0
            return brentq(g, rho0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
        if g(0.0) * sign > 0:  # level not reached before the origin
            return None
        return brentq(g, 0.0, rho0, xtol=1e-15, rtol=4 * np.finfo(float).eps)

    def check_gradient(self, count: int = 200) -> float:
        """Minimum of |grad P| sampled over |P| <= tau."""
        rho_in = self.level_radius(self.tau, "inner")
        rho_out = self.level_radius(self.tau, "outer")
        lo = rho_in if rho_in is not None else 0.0
        rho = np.linspace(lo, rho_out, count)
        inside = np.abs(self.profile(rho)) <= self.tau
        return float(np.min(np.abs(self.dprofile(rho[inside]))))

    def growth_violation(self, count: int = 4000) -> float:
        """Largest value of C1 |p|^s + C2 - (T - delta) outside the tau-neighbourhood."""
        rho = self._exterior_samples(count)
        return float(np.max(self.c1 * rho**self.s + self.c2 - self.eval_T0_radial(rho)))

    def as_dict(self) -> dict:
        out = {
            "n": self.n, "kind": self.kind, "r": self.r, "delta": self.delta,
            "tau": self.tau, "s": self.s, "c1": self.c1, "c2": self.c2,
        }
        if self.kind == "bcs":
            out["mu"] = self.mu
        elif self.kind == "roton":
            out.update(p0=self.p0, mass=self.mass)
        else:
            out["coeffs"] = list(self.coeffs)
        return out


# -- angular rules ----------------------------------------------------------

def unit_sphere_rule(n: int, resolution: int):
    """Product rule on the unit sphere S^{n-1}.

    n = 2: ``resolution`` uniform angles.  n = 3: Gauss-Legendre of order
    ``resolution`` in cos(theta) times ``2*resolution`` uniform azimuths.
    Nodes are ordered with the azimuth varying fastest.  Returns
    (directions, weights, n_azimuth).
    """
    if n == 2:
        phi = 2.0 * np.pi * np.arange(resolution) / resolution
        dirs = np.stack([np.cos(phi), np.sin(phi)], axis=-1)
        return dirs, np.full(resolution, 2.0 * np.pi / resolution), resolution
    if n == 3:
        x, wx = np.polynomial.legendre.leggauss(resolution)
        m = 2 * resolution
        phi = 2.0 * np.pi * np.arange(m) / m
        sin_t = np.sqrt(1.0 - x**2)
        dirs = np.empty((resolution, m, 3))
        dirs[..., 0] = sin_t[:, None] * np.cos(phi)[None, :]
        dirs[..., 1] = sin_t[:, None] * np.sin(phi)[None, :]
        dirs[..., 2] = x[:, None]
        w = np.repeat(wx * (2.0 * np.pi / m), m)
        return dirs.reshape(-1, 3), w, m
    raise ValueError(f"builtin quadratures cover n = 2, 3 only (got n={n})")


# -- surface quadrature -----------------------------------------------------

@dataclass(frozen=True)
class SurfaceQuadrature:
    """Nodes on S (or a level set S_t) with surface weights and |grad P|."""

    nodes: np.ndarray
    weights: np.ndarray
    gradnorms: np.ndarray
    level: float = 0.0
    n_azimuth: int | None = None

    def __post_init__(self):
        if self.nodes.ndim != 2 or len(self.nodes) != len(self.weights) != len(self.gradnorms):
            raise ValueError("nodes, weights and gradnorms must have matching lengths")
        if np.any(self.weights <= 0) or np.any(self.gradnorms <= 0):
            raise ValueError("surface weights and gradient norms must be positive")

    @property
    def size(self) -> int:
        return len(self.weights)

    @property
    def dim(self) -> int:
        return self.nodes.shape[1]

    @property
    def measure(self) -> float:
        return float(np.sum(self.weights))

    def sym_factor(self) -> np.ndarray:
        """sqrt(w / g), the factor that maps function values to symmetrized coordinates."""
        return np.sqrt(self.weights / self.gradnorms)

    def to_function(self, coords: np.ndarray) -> np.ndarray:
        """Symmetrized coordinates (sqrt(w) u) back to function values u."""
        coords = np.asarray(coords)
        scale = np.sqrt(self.weights)
        return coords / (scale[:, None] if coords.ndim == 2 else scale)

    def to_coords(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values)
        scale = np.sqrt(self.weights)
        return values * (scale[:, None] if values.ndim == 2 else scale)


def build_surface_quadrature(sym: KineticSymbol, level: float = 0.0,
                             resolution: int = 32) -> SurfaceQuadrature:
    """Quadrature on S (level 0) or on the two level spheres |P| = level."""
    if resolution < 4:
        raise ValueError("surface resolution must be >= 4")
    if not 0.0 <= level < sym.tau:
        raise ValueError(f"level {level} outside [0, tau={sym.tau})")
    dirs, w_unit, n_az = unit_sphere_rule(sym.n, resolution)
    radii = [sym.level_radius(level, "outer")]
    if level > 0:
        inner = sym.level_radius(level, "inner")
        if inner is None:
            warnings.warn(f"inner level sphere |P| = {level} does not exist; omitted")
        else:
            radii.append(inner)
    nodes, weights, grads = [], [], []
    for rho in radii:
        nodes.append(rho * dirs)
        weights.append(w_unit * rho ** (sym.n - 1))
        grads.append(np.full(len(w_unit), abs(float(sym.dprofile(rho)))))
    return SurfaceQuadrature(np.concatenate(nodes), np.concatenate(weights),
                             np.concatenate(grads), level=float(level),
                             n_azimuth=n_az if len(radii) == 1 else None)


def load_surface_quadrature(path: str | Path) -> SurfaceQuadrature:
    """Read a user-supplied quadrature (``px,py[,pz],weight,gradnorm``)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        coords = [h for h in header if h.startswith("p")]
        if header not in (["px", "py", "weight", "gradnorm"],
                          ["px", "py", "pz", "weight", "gradnorm"]):
            raise ValueError(f"{path}: unexpected header {header}")
        rows = [[float(v) for v in row] for row in reader if row]
    data = np.array(rows, dtype=float).reshape(-1, len(header))
    k = len(coords)
    return SurfaceQuadrature(data[:, :k].copy(), data[:, k].copy(), data[:, k + 1].copy())


def save_surface_quadrature(quad: SurfaceQuadrature, path: str | Path) -> None:
    from .persist import atomic_write_text, quadrature_csv
    atomic_write_text(path, quadrature_csv(quad))


# -- momentum grid ----------------------------------------------------------

@dataclass(frozen=True)
class MomentumGrid:
    """Product grid: radial nodes times a unit-sphere rule.

    Node index is ``(radial * n_polar + polar) * n_azimuth + azimuth``; the
    leading part is the "meridional" index used by the block-circulant
    kernels in :mod:`degenspec.kernels`.
    """

    n: int
    radii: np.ndarray
    radial_weights: np.ndarray      # rho^{n-1} d rho
    directions: np.ndarray          # unit-sphere nodes, azimuth fastest
    angular_weights: np.ndarray
    n_azimuth: int
    e_min: float
    cutoff: float
    levels: np.ndarray = field(repr=False)   # panel edges in t inside Omega_tau
    in_shell: np.ndarray = field(repr=False)  # radial node lies in Omega_tau
    order: int = 6
    ratio: float = 0.75
    outer_panels: int = 10
    core_panels: int = 4

    @property
    def n_radial(self) -> int:
        return len(self.radii)

    @property
    def n_polar(self) -> int:
        return len(self.angular_weights) // self.n_azimuth

    @property
    def n_meridional(self) -> int:
        return self.n_radial * self.n_polar

    @property
    def size(self) -> int:
        return self.n_radial * len(self.angular_weights)

    @property
    def nodes(self) -> np.ndarray:
        return (self.radii[:, None, None] * self.directions[None, :, :]).reshape(-1, self.n)

    @property
    def weights(self) -> np.ndarray:
        return np.outer(self.radial_weights, self.angular_weights).ravel()

    def meridional_radii(self) -> np.ndarray:
        return np.repeat(self.radii, self.n_polar)

    def integrate(self, values: np.ndarray) -> float:
        return float(np.dot(self.weights, values))

    def fingerprint(self) -> str:
        import hashlib
        h = hashlib.sha256()
        for arr in (self.radii, self.radial_weights, self.directions, self.angular_weights):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()[:16]

    def summary(self) -> dict:
        return {
            "n": self.n, "radial": self.n_radial, "angular": len(self.angular_weights),
            "nodes": self.size, "e_min": self.e_min, "cutoff": self.cutoff,
            "t_min": float(self.levels[-1]), "order": self.order,
            "fingerprint": self.fingerprint(),
        }


def _gl_panels(edges: np.ndarray, order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    a, b = edges[:-1, None], edges[1:, None]
    nodes = 0.5 * (b - a) * x[None, :] + 0.5 * (a + b)
    weights = 0.5 * (b - a) * w[None, :]
    return nodes.ravel(), np.abs(weights).ravel()


def build_momentum_grid(sym: KineticSymbol, e_min: float, cutoff: float = 8.0,
                        shells: int | None = None, angular: int = 48, ratio: float = 0.75,
                        order: int = 6, outer_panels: int = 10,
                        core_panels: int = 4) -> MomentumGrid:
    """Graded polar grid resolving the resolvent 1/(T + e) for e >= e_min.

    Inside ``|P| < tau`` the radial variable is the level t itself, on
    geometric panels ``tau * ratio**k`` (k = 0..shells) plus ``[0, t_min]``;
    the radial weight carries the coordinate change rho^{n-1} / |P'(rho)|
    (co-area form).  The core ``rho < rho_in(tau)`` and the outer region up
    to ``cutoff`` use Gauss-Legendre panels in rho.  ``shells=None`` picks
    the smallest count that resolves ``e_min``.
    """
    if e_min <= 0:
        raise ValueError("e_min must be positive")
    tau = sym.tau
    needed = e_min ** (1.0 / sym.r) / 10.0
    if shells is None:
        shells = max(1, math.ceil(math.log(needed / tau) / math.log(ratio) - 1e-9))
    t_min = tau * ratio**shells
    if t_min > needed * (1 + 1e-12):
        raise ValueError(
            f"{shells} shells reach t_min={t_min:.3g}, but e_min={e_min:g} needs "
            f"t_min <= {needed:.3g}; increase shells")
    rho_out_tau = sym.level_radius(tau, "outer")
    if cutoff <= rho_out_tau:
        raise ValueError(f"cutoff {cutoff} must exceed outer radius {rho_out_tau:.4g} of Omega_tau")

    levels = np.concatenate([tau * ratio ** np.arange(shells + 1), [0.0]])
    t_nodes, t_weights = _gl_panels(levels[::-1], order)

    radii, rweights, shell_flag = [], [], []

    def add(rho, dt_weight):
        rho = np.asarray(rho)
        jac = rho ** (sym.n - 1) / np.abs(sym.dprofile(rho))
        radii.append(rho)
        rweights.append(dt_weight * jac)
        shell_flag.append(np.ones(len(rho), bool))

    rho_in_tau = sym.level_radius(tau, "inner")
    if rho_in_tau is not None:
        # core region 0 <= rho <= rho_in(tau)
        edges = np.linspace(0.0, rho_in_tau, core_panels + 1)
        rc, wc = _gl_panels(edges, order)
        radii.append(rc)
        rweights.append(wc * rc ** (sym.n - 1))
        shell_flag.append(np.zeros(len(rc), bool))
        inner = np.array([sym.level_radius(t, "inner") for t in t_nodes[::-1]])
        add(inner, t_weights[::-1])
    outer = np.array([sym.level_radius(t, "outer") for t in t_nodes])
    add(outer, t_weights)
    # outer panels widen geometrically away from S
    span = cutoff - rho_out_tau
    g = np.geomspace(1.0, 4.0, outer_panels)
    edges = rho_out_tau + span * np.concatenate([[0.0], np.cumsum(g) / np.sum(g)])
    ro, wo = _gl_panels(edges, order)
    radii.append(ro)
    rweights.append(wo * ro ** (sym.n - 1))
    shell_flag.append(np.zeros(len(ro), bool))

    dirs, w_ang, n_az = unit_sphere_rule(sym.n, angular if sym.n == 2 else max(angular // 2, 2))
    return MomentumGrid(
        n=sym.n,
        radii=np.concatenate(radii),
        radial_weights=np.concatenate(rweights),
        directions=dirs,
        angular_weights=w_ang,
        n_azimuth=n_az,
        e_min=float(e_min),
        cutoff=float(cutoff),
        levels=levels[:-1],
        in_shell=np.concatenate(shell_flag),
        order=order,
        ratio=ratio,
        outer_panels=outer_panels,
        core_panels=core_panels,
    )
