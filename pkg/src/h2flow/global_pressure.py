"""Global pressure, Kirchhoff transform and the energy pair (g_g, H_g)."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicHermiteSpline

from .closures import GAS, LIQUID, HenryDensity, Z

_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


def _integrands(closures, s):
    Ml = closures.mobility(LIQUID, s)
    Mg = closures.mobility(GAS, s)
    M = Ml + Mg
    dpc = closures.dcapillary(s)
    return -Ml / M * dpc, Mg / M * dpc, -Ml * Mg / M * dpc


def _cumulative(f, nodes):
    """Node values of int_0^s f, Gauss-Legendre on each cell."""
    a, b = nodes[:-1], nodes[1:]
    pts = a[:, None] + (b - a)[:, None] * _GL_X
    vals = f(pts)
    cell = (b - a) * np.sum(vals * _GL_W, axis=1)
    return np.concatenate([[0.0], np.cumsum(cell)])


def _hermite_monotone(m0, m1, secant, slack=1e-6):
    """Fritsch-Carlson monotonicity region for cubic Hermite pieces."""
    a = m0 / secant
    b = m1 / secant
    if np.any(a < 0) or np.any(b < 0):
        return False
    with np.errstate(divide="ignore", invalid="ignore"):
        phi = a - (2 * a + b - 3) ** 2 / (3 * (a + b - 2))
    ok = (a + 2 * b - 3 <= slack) | (2 * a + b - 3 <= slack) | (phi >= -slack)
    return bool(np.all(ok))


@dataclass
class GlobalPressureTables:
    nodes: np.ndarray
    p_tilde: np.ndarray
    p_bar: np.ndarray
    gamma: np.ndarray
    B: np.ndarray
    B_total: float
    closures: object

    def __post_init__(self):
        dpt, dpb, gam = _integrands(self.closures, self.nodes)
        self._pt = CubicHermiteSpline(self.nodes, self.p_tilde, dpt)
        self._pb = CubicHermiteSpline(self.nodes, self.p_bar, dpb)
        self._B = CubicHermiteSpline(self.nodes, self.B, gam)

    def eval_p_tilde(self, s):
        return self._pt(Z(s))

    def eval_p_bar(self, s):
        return self._pb(Z(s))

    def eval_gamma(self, s):
        return _integrands(self.closures, Z(np.asarray(s, dtype=float)))[2]

    def eval_B(self, s):
        return self._B(Z(s))

    def B_inverse(self, b, tol=1e-12):
        """Saturation with B(s) = b, by bisection on the interpolant."""
        b = np.asarray(b, dtype=float)
        slack = 1e-12 * self.B_total
        if np.any(b < -slack) or np.any(b > self.B_total + slack):
            raise ValueError("B_inverse argument outside [0, B(1)]")
        lo = np.zeros_like(b)
        hi = np.ones_like(b)
        for _ in range(64):
            mid = 0.5 * (lo + hi)
            below = self._B(mid) < b
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
            if np.all(hi - lo <= tol):
                break
        return 0.5 * (lo + hi)

    def global_p(self, p_g, s):
        return p_g + self.eval_p_tilde(s)

    def global_p_from_liquid(self, p_l, s):
        return p_l + self.eval_p_bar(s)

    def dump_csv(self, path, header=None):
        with open(path, "w", newline="") as fh:
            if header:
                fh.write(header.rstrip("\n") + "\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["s", "p_tilde", "p_bar", "gamma", "B"])
            for row in zip(self.nodes, self.p_tilde, self.p_bar, self.gamma, self.B):
                w.writerow([repr(float(v)) for v in row])


def build_tables(closures, n=2048):
    """Tabulate p~, p-bar, gamma and B on ``n`` uniform saturation nodes.

    Both pressures are anchored at s = 1, so p_bar - p_tilde = pc.
    """
    if n < 64:
        raise ValueError("need at least 64 nodes")
    nodes = np.linspace(0.0, 1.0, n)
    It = _cumulative(lambda s: _integrands(closures, s)[0], nodes)
    Ib = _cumulative(lambda s: _integrands(closures, s)[1], nodes)
    IB = _cumulative(lambda s: _integrands(closures, s)[2], nodes)
    if not np.all(np.isfinite(IB)):
        raise ArithmeticError("quadrature produced non-finite values")
    gamma = _integrands(closures, nodes)[2]
    dB = np.diff(IB)
    if np.any(dB <= 0):
        raise ValueError("Kirchhoff transform not strictly increasing; gamma vanishes inside (0,1)")
    if not _hermite_monotone(gamma[:-1], gamma[1:], dB / np.diff(nodes)):
        raise ValueError("B table not monotone under Hermite interpolation; refine n")
    return GlobalPressureTables(nodes=nodes, p_tilde=It - It[-1], p_bar=Ib - Ib[-1],
                                gamma=gamma, B=IB, B_total=float(IB[-1]), closures=closures)


@dataclass
class EnergyFunctions:
    """g_g, H_g = rho g_g - p and the pc primitive for one closure set."""

    closures: object

    def g_g(self, p):
        dens = self.closures.density
        if hasattr(dens, "primitive_inverse"):
            return dens.primitive_inverse(p)
        p = np.asarray(p, dtype=float)
        f = np.vectorize(lambda q: integrate.quad(lambda z: 1.0 / float(dens(z)), 0.0, q,
                                                  epsabs=0, epsrel=1e-13, limit=200)[0])
        return f(p)

    def H_g(self, p):
        p = np.asarray(p, dtype=float)
        dens = self.closures.density
        H = dens(p) * self.g_g(p) - p
        if isinstance(dens, HenryDensity):
            # cancellation-free forms on the pieces where rho is flat or linear
            G0 = dens._G(np.zeros(()))
            with np.errstate(divide="ignore", invalid="ignore"):
                lin = p * (dens.C2 * (dens._Ga2 - G0) + np.log(p / dens.a2) - 1.0)
            H = np.where((p >= dens.a2) & (p <= dens.b1), lin, H)
            H = np.where(p >= dens.b2, dens.hi * (dens._Gb2 - G0) - dens.b2, H)
            H = np.where(p <= dens.a1, dens.lo * (-G0), H)
        return H

    def dH_g(self, p):
        return self.closures.density.derivative(p) * self.g_g(p)

    def Pc_primitive(self, s):
        return self.closures.pc_primitive(s)

    def energy_density(self, p_g, s):
        """m(s) H_g(p_g) - C1 int_0^s pc."""
        C1 = self.closures.fluid.C1
        return self.closures.m_of_s(s) * self.H_g(p_g) - C1 * self.Pc_primitive(s)


def energy_functions(closures):
    return EnergyFunctions(closures)
