"""Potentials with known Fourier transforms and integrability diagnostics.

Fourier convention: ``vhat(p) = (2 pi)^{-n/2} \\int e^{-i x.p} V(x) dx``.

``gaussian``      V(x) = -A exp(-|x|^2 / (2 w^2))     (A > 0 is attractive)
``gaussian-mix``  sum of such terms with signed amplitudes
``tabulated``     radial vhat read from CSV, V(x) recovered by Hankel transform
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate, special

KINDS = ("gaussian", "gaussian-mix", "tabulated")


class OutOfRangeError(ValueError):
    """Momentum beyond the range of a tabulated transform."""


@dataclass(frozen=True)
class Potential:
    n: int
    kind: str = "gaussian"
    amplitudes: tuple = (1.0,)
    widths: tuple = (1.0,)
    table_p: np.ndarray | None = field(default=None, repr=False)
    table_re: np.ndarray | None = field(default=None, repr=False)
    table_im: np.ndarray | None = field(default=None, repr=False)
    attractive: bool | None = None  # tabulated kind: caller asserts V <= 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown potential kind {self.kind!r}")
        if self.kind in ("gaussian", "gaussian-mix"):
            amps = tuple(float(a) for a in self.amplitudes)
            widths = tuple(float(w) for w in self.widths)
            if len(amps) != len(widths) or not amps:
                raise ValueError("amplitudes and widths must be non-empty and of equal length")
            if self.kind == "gaussian" and len(amps) != 1:
                raise ValueError("gaussian kind takes a single amplitude/width")
            if any(w <= 0 for w in widths):
                raise ValueError("widths must be positive")
            object.__setattr__(self, "amplitudes", amps)
            object.__setattr__(self, "widths", widths)
        else:
            p = np.asarray(self.table_p, dtype=float)
            if p.ndim != 1 or len(p) < 2 or np.any(np.diff(p) <= 0):
                raise ValueError("tabulated radii must be strictly increasing")

    @classmethod
    def gaussian(cls, n: int, A: float = 1.0, w: float = 1.0) -> "Potential":
        return cls(n=n, kind="gaussian", amplitudes=(A,), widths=(w,))

    @classmethod
    def zero(cls, n: int) -> "Potential":
        return cls.gaussian(n, 0.0, 1.0)

    @classmethod
    def from_table(cls, n: int, path: str | Path, attractive: bool = False) -> "Potential":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = [h.strip() for h in next(reader)]
            if header not in (["p_radius", "re_vhat"], ["p_radius", "re_vhat", "im_vhat"]):
                raise ValueError(f"{path}: unexpected header {header}")
            rows = np.array([[float(v) for v in row] for row in reader if row])
        im = rows[:, 2] if rows.shape[1] == 3 else None
        return cls(n=n, kind="tabulated", table_p=rows[:, 0], table_re=rows[:, 1],
                   table_im=im, attractive=attractive)

    # -- properties -----------------------------------------------------
    @property
    def is_zero(self) -> bool:
        if self.kind == "tabulated":
            return not np.any(self.table_re) and (self.table_im is None or not np.any(self.table_im))
        return all(a == 0 for a in self.amplitudes)

    @property
    def sign_definite(self) -> bool:
        if self.kind == "tabulated":
            return bool(self.attractive)
        nz = [a for a in self.amplitudes if a != 0]
        return all(a > 0 for a in nz) or all(a < 0 for a in nz)

    @property
    def is_attractive(self) -> bool:
        """V <= 0 everywhere (the zero potential counts)."""
        if self.kind == "tabulated":
            return bool(self.attractive)
        return all(a >= 0 for a in self.amplitudes)

    def scaled(self, c: float) -> "Potential":
        if self.kind == "tabulated":
            im = None if self.table_im is None else c * self.table_im
            return Potential(self.n, "tabulated", table_p=self.table_p, table_re=c * self.table_re,
                             table_im=im, attractive=self.attractive if c > 0 else False)
        return Potential(self.n, self.kind, tuple(c * a for a in self.amplitudes), self.widths)

    def as_dict(self) -> dict:
        if self.kind == "tabulated":
            return {"kind": "tabulated", "n": self.n, "points": int(len(self.table_p)),
                    "p_max": float(self.table_p[-1]), "attractive": bool(self.attractive)}
        return {"kind": self.kind, "n": self.n, "amplitudes": list(self.amplitudes),
                "widths": list(self.widths)}

    # -- transforms -----------------------------------------------------
    def fourier_radial(self, k):
        """vhat as a function of |p| (real part for tabulated kinds)."""
        k = np.asarray(k, dtype=float)
        if self.kind == "tabulated":
            if np.any(k > self.table_p[-1]) or np.any(k < self.table_p[0]):
                raise OutOfRangeError(
                    f"|p| outside tabulated range [{self.table_p[0]}, {self.table_p[-1]}]")
            return np.interp(k, self.table_p, self.table_re)
        out = np.zeros_like(k)
        for a, w in zip(self.amplitudes, self.widths):
            out -= a * w**self.n * np.exp(-0.5 * w * w * k * k)
        return out

    def fourier_sq(self, k2):
        """vhat as a function of |p|^2; avoids square roots in kernel assembly."""
        k2 = np.asarray(k2, dtype=float)
        if self.kind == "tabulated":
            return self.fourier_radial(np.sqrt(np.maximum(k2, 0.0)))
        out = np.zeros_like(k2)
        for a, w in zip(self.amplitudes, self.widths):
            out -= a * w**self.n * np.exp(-0.5 * w * w * k2)
        return out

    def fourier(self, p):
        """vhat(p) at points p (..., n); complex for tabulated tables with an imaginary part."""
        k = np.linalg.norm(np.asarray(p, dtype=float), axis=-1)
        re = self.fourier_radial(k)
        if self.kind == "tabulated" and self.table_im is not None:
            return re + 1j * np.interp(k, self.table_p, self.table_im)
        return re

    def value_radial(self, r):
        """V as a function of |x|."""
        r = np.asarray(r, dtype=float)
        if self.kind == "tabulated":
            return self._hankel_inverse(r)
        out = np.zeros_like(r)
        for a, w in zip(self.amplitudes, self.widths):
            out -= a * np.exp(-0.5 * r * r / (w * w))
        return out

    def value(self, x):
        return self.value_radial(np.linalg.norm(np.asarray(x, dtype=float), axis=-1))

    def _hankel_inverse(self, r):
        # V(r) = r^{1-n/2} \int_0^inf vhat(k) J_{n/2-1}(k r) k^{n/2} dk for the unitary convention
        nu = self.n / 2.0 - 1.0
        k = np.linspace(0.0, self.table_p[-1], 4 * len(self.table_p) + 1)
        vk = np.interp(k, self.table_p, self.table_re, left=self.table_re[0])
        r = np.atleast_1d(r)
        out = np.empty_like(r)
        for i, ri in enumerate(r):
            if ri == 0.0:
                integrand = vk * k ** (self.n - 1) / (2.0 ** nu * special.gamma(nu + 1.0))
            else:
                integrand = vk * special.jv(nu, k * ri) * k ** (self.n / 2.0) * ri ** (-nu)
            out[i] = integrate.trapezoid(integrand, k)
        return out


# -- integrability report ---------------------------------------------------

@dataclass(frozen=True)
class HypothesisReport:
    L1_norm: float
    extra_norm: float | None
    extra_norm_label: str
    kappa: int
    moment_kappa: float
    epsilon: float | None
    passes: bool

    def as_dict(self) -> dict:
        return {
            "L1_norm": self.L1_norm, "extra_norm": self.extra_norm,
            "extra_norm_label": self.extra_norm_label, "kappa": self.kappa,
            "moment_kappa": self.moment_kappa, "epsilon": self.epsilon, "passes": self.passes,
        }


EPSILON_N_EQ_S = 0.1


def sphere_area(n: int) -> float:
    """Surface measure of the unit sphere S^{n-1}."""
    return 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)


def select_kappa(n: int, radial_symbol: bool) -> int:
    if not radial_symbol:
        return 2
    return 1 if n == 2 else 0


def _lp_norm_numeric(V: Potential, p: float, r_max: float) -> float:
    def integrand(r):
        return abs(float(V.value_radial(r))) ** p * r ** (V.n - 1)
    val, _ = integrate.quad(integrand, 0.0, r_max, limit=400)
    val += integrate.quad(integrand, r_max, np.inf, limit=400)[0] if V.kind != "tabulated" else 0.0
    return (sphere_area(V.n) * val) ** (1.0 / p)


def _moment_numeric(V: Potential, kappa: float, r_max: float, order: int = 96) -> float:
    # radial x radial x relative-angle tensor Gauss-Legendre quadrature
    n = V.n
    x, w = np.polynomial.legendre.leggauss(order)
    r = 0.5 * r_max * (x + 1.0)
    va = np.abs(V.value_radial(r)) * r ** (n - 1) * (0.5 * r_max * w)
    gamma = 0.5 * np.pi * (x + 1.0)
    wg = 0.5 * np.pi * w * np.sin(gamma) ** (n - 2)
    d2 = (r[:, None, None] ** 2 + r[None, :, None] ** 2
          - 2.0 * r[:, None, None] * r[None, :, None] * np.cos(gamma))
    inner = np.tensordot(np.maximum(d2, 0.0) ** (kappa / 2.0), wg, axes=([2], [0]))
    return float(sphere_area(n) * sphere_area(n - 1) * va @ inner @ va)


def hypothesis_report(V: Potential, sym) -> HypothesisReport:
    """Norms required by the small-coupling theorems for ``V`` and ``sym``."""
    n, s = V.n, sym.s
    kappa = select_kappa(n, radial_symbol=True)
    if n > s:
        p_extra, label, eps = n / s, f"L^{n / s:g}", None
    elif n == s:
        p_extra, label, eps = 1.0 + EPSILON_N_EQ_S, f"L^{1 + EPSILON_N_EQ_S:g}", EPSILON_N_EQ_S
    else:
        p_extra, label, eps = None, "none", None

    if V.is_zero:
        return HypothesisReport(0.0, 0.0 if p_extra else None, label, kappa, 0.0, eps, True)

    if V.kind == "gaussian":
        a, w = abs(V.amplitudes[0]), V.widths[0]
        l1 = a * (2.0 * math.pi) ** (n / 2.0) * w**n
        extra = None
        if p_extra is not None:
            extra = a * (2.0 * math.pi * w * w / p_extra) ** (n / (2.0 * p_extra))
        # x - y is normal with variance 2 w^2 per component
        sigma2 = 2.0 * w * w
        moment = l1 * l1 * (2.0 * sigma2) ** (kappa / 2.0) * math.gamma((n + kappa) / 2.0) / math.gamma(n / 2.0)
    else:
        r_max = 12.0 * max(V.widths) if V.kind == "gaussian-mix" else _table_r_max(V)
        l1 = _lp_norm_numeric(V, 1.0, r_max)
        extra = _lp_norm_numeric(V, p_extra, r_max) if p_extra is not None else None
        moment = _moment_numeric(V, kappa, r_max)
    values = [l1, moment] + ([extra] if extra is not None else [])
    passes = all(math.isfinite(v) for v in values)
    return HypothesisReport(float(l1), None if extra is None else float(extra), label, kappa,
                            float(moment), eps, passes)


def _table_r_max(V: Potential) -> float:
    # resolution-limited radius of the Hankel inverse
    return 40.0 / max(V.table_p[-1], 1e-12) * 10.0
