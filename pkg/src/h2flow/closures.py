"""Pointwise closure laws for the water/hydrogen liquid-gas system.

Every saturation-dependent function is evaluated at ``clip(s, 0, 1)`` so it
is defined (and continuous) on the whole real line.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

LIQUID = "liquid"
GAS = "gas"

# 16-point Gauss-Legendre rule on [0, 1], used for primitives of pc.
_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


def Z(s):
    """Projection of an extended saturation onto [0, 1]."""
    return np.clip(s, 0.0, 1.0)


@dataclass(frozen=True)
class FluidParams:
    """Fluid constants.

    ``H_h`` is derived from ``C1`` so that ``C1 == 1/(H_h*R*T)`` by
    construction; ``C2 = H_h*M_h``.
    """

    mu_l: float = 1.0e-3
    mu_g: float = 9.0e-6
    M_h: float = 2.016e-3
    R: float = 8.314
    T: float = 303.0
    C1: float = 52.51
    rho_l_w: float = 1000.0
    rho_min: float = 1.0e-5
    rho_max: float = 1.0
    H_h: float = field(init=False)
    C2: float = field(init=False)

    def __post_init__(self):
        if not (self.mu_l > 0 and self.mu_g > 0):
            raise ValueError("viscosities must be positive")
        if not self.rho_l_w > 0:
            raise ValueError("rho_l_w must be positive")
        if not 0 < self.rho_min < self.rho_max:
            raise ValueError("need 0 < rho_min < rho_max")
        if not (self.C1 > 0 and self.R > 0 and self.T > 0 and self.M_h > 0):
            raise ValueError("C1, R, T, M_h must be positive")
        H_h = 1.0 / (self.C1 * self.R * self.T)
        object.__setattr__(self, "H_h", H_h)
        object.__setattr__(self, "C2", H_h * self.M_h)


class HenryDensity:
    """Dissolved-hydrogen density: Henry law ``C2*p`` smoothly clamped.

    The clamp knees are quadratic blends of half-width 1% of the bound they
    approach, so the law is C1, nondecreasing and stays in
    ``[rho_min, rho_max]``.  ``primitive_inverse`` is the exact
    ``int_0^p dz / rho(z)``.
    """

    knee = 0.01

    def __init__(self, C2, rho_min, rho_max):
        if C2 <= 0:
            raise ValueError("Henry slope C2 must be positive")
        self.C2 = float(C2)
        self.lo = float(rho_min)
        self.hi = float(rho_max)
        self.dl = self.knee * self.lo
        self.dh = self.knee * self.hi
        if self.lo + self.dl >= self.hi - self.dh:
            raise ValueError("density bounds too close for the clamp knees")
        C2 = self.C2
        self.a1 = (self.lo - self.dl) / C2
        self.a2 = (self.lo + self.dl) / C2
        self.b1 = (self.hi - self.dh) / C2
        self.b2 = (self.hi + self.dh) / C2
        self.cl = np.sqrt(4.0 * self.dl * self.lo)
        self.ch = np.sqrt(4.0 * self.dh * self.hi)
        # primitive values at the knee boundaries
        self._Ga1 = self.a1 / self.lo
        self._Ga2 = self._Ga1 + 4.0 * self.dl / (C2 * self.cl) * np.arctan(2.0 * self.dl / self.cl)
        self._Gb1 = self._Ga2 + np.log(self.b1 / self.a2) / C2
        self._Gb2 = self._Gb1 + 4.0 * self.dh / (C2 * self.ch) * np.arctanh(2.0 * self.dh / self.ch)

    def __call__(self, p):
        p = np.asarray(p, dtype=float)
        y = self.C2 * p
        out = np.where(y <= self.lo - self.dl, self.lo, y)
        u = y - self.lo + self.dl
        out = np.where((y > self.lo - self.dl) & (y < self.lo + self.dl),
                       self.lo + u * u / (4.0 * self.dl), out)
        v = self.hi + self.dh - y
        out = np.where((y > self.hi - self.dh) & (y < self.hi + self.dh),
                       self.hi - v * v / (4.0 * self.dh), out)
        return np.where(y >= self.hi + self.dh, self.hi, out)

    def derivative(self, p):
        p = np.asarray(p, dtype=float)
        C2 = self.C2
        y = C2 * p
        out = np.where((y <= self.lo - self.dl) | (y >= self.hi + self.dh), 0.0, C2)
        u = y - self.lo + self.dl
        out = np.where((y > self.lo - self.dl) & (y < self.lo + self.dl),
                       C2 * u / (2.0 * self.dl), out)
        v = self.hi + self.dh - y
        return np.where((y > self.hi - self.dh) & (y < self.hi + self.dh),
                        C2 * v / (2.0 * self.dh), out)

    def _G(self, p):
        C2 = self.C2
        G = p / self.lo
        u = C2 * p - self.lo + self.dl
        with np.errstate(divide="ignore", invalid="ignore"):
            GB = self._Ga1 + 4.0 * self.dl / (C2 * self.cl) * np.arctan(u / self.cl)
            GC = self._Ga2 + np.log(p / self.a2) / C2
            v = self.hi + self.dh - C2 * p
            GD = self._Gb1 - 4.0 * self.dh / (C2 * self.ch) * (
                np.arctanh(v / self.ch) - np.arctanh(2.0 * self.dh / self.ch))
        GE = self._Gb2 + (p - self.b2) / self.hi
        G = np.where(p > self.a1, GB, G)
        G = np.where(p >= self.a2, GC, G)
        G = np.where(p > self.b1, GD, G)
        return np.where(p >= self.b2, GE, G)

    def primitive_inverse(self, p):
        """``int_0^p dz / rho(z)``, exact."""
        p = np.asarray(p, dtype=float)
        return self._G(p) - self._G(np.zeros(()))


def linear_pc(P_e):
    def pc(s):
        return P_e * (1.0 - Z(s))

    def dpc(s):
        return np.full(np.shape(s), -float(P_e))

    def pc_inv(p):
        return Z(1.0 - np.asarray(p, dtype=float) / P_e)

    return pc, dpc, pc_inv


def exponential_pc(P_e, lam):
    """``pc = P_e (exp(lam(1-s)) - 1)/(exp(lam) - 1)``; |pc'| >= P_e lam/(e^lam - 1)."""
    den = np.expm1(lam)

    def pc(s):
        return P_e * np.expm1(lam * (1.0 - Z(s))) / den

    def dpc(s):
        return -P_e * lam * np.exp(lam * (1.0 - Z(s))) / den

    def pc_inv(p):
        p = np.clip(np.asarray(p, dtype=float), 0.0, P_e)
        return Z(1.0 - np.log1p(p * den / P_e) / lam)

    return pc, dpc, pc_inv


def power_kr(n):
    def kr(s):
        return Z(s) ** n
    return kr


@dataclass
class ClosureSet:
    """Mobility, capillary, density and diffusion closures.

    ``kr_l`` takes the liquid saturation, ``kr_g`` the gas saturation.
    ``pc_inv`` maps a pressure difference (clipped to the pc range) back to
    the liquid saturation.
    """

    kr_l: Callable
    kr_g: Callable
    pc: Callable
    dpc: Callable
    pc_inv: Callable
    D_lh: Callable
    fluid: FluidParams
    density: object = None
    P_e: float = 0.0  # pc(0), entry scale used for nondimensionalisation

    def __post_init__(self):
        if self.density is None:
            self.density = HenryDensity(self.fluid.C2, self.fluid.rho_min, self.fluid.rho_max)
        if not self.P_e:
            self.P_e = float(self.pc(0.0))

    # mobilities ---------------------------------------------------------
    def mobility(self, phase, s):
        """Mobility of ``phase`` as a function of the *liquid* saturation."""
        s = Z(np.asarray(s, dtype=float))
        if phase == LIQUID:
            return self.kr_l(s) / self.fluid.mu_l
        if phase == GAS:
            return self.kr_g(1.0 - s) / self.fluid.mu_g
        raise ValueError(f"unknown phase {phase!r}")

    def mobility_eps(self, phase, s, eps):
        if eps < 0:
            raise ValueError("eps must be nonnegative")
        return self.mobility(phase, s) + eps

    def total_mobility(self, s):
        return self.mobility(LIQUID, s) + self.mobility(GAS, s)

    # capillarity --------------------------------------------------------
    def capillary(self, s):
        return self.pc(Z(np.asarray(s, dtype=float)))

    def dcapillary(self, s):
        return self.dpc(Z(np.asarray(s, dtype=float)))

    def saturation_from_pc(self, dp):
        return self.pc_inv(np.clip(dp, 0.0, self.P_e))

    def pc_primitive(self, s):
        """``int_0^s pc(z) dz`` by Gauss-Legendre (exact for polynomial pc)."""
        s = Z(np.asarray(s, dtype=float))
        z = s[..., None] * _GL_X
        return s * np.sum(self.capillary(z) * _GL_W, axis=-1)

    # densities and fractions -------------------------------------------
    def rho_l_h(self, p_g):
        return self.density(p_g)

    def rho_g_h(self, p_g):
        return self.fluid.C1 * self.density(p_g)

    def rho_liquid(self, p_g):
        """Full liquid density rho_l^h + rho_l^w."""
        return self.density(p_g) + self.fluid.rho_l_w

    def mass_fractions(self, p_g):
        rho = self.density(p_g)
        X_h = rho / (rho + self.fluid.rho_l_w)
        return X_h, 1.0 - X_h

    def m_of_s(self, s):
        s = Z(np.asarray(s, dtype=float))
        return s + self.fluid.C1 * (1.0 - s)

    def diffusion(self, s):
        return self.D_lh(Z(np.asarray(s, dtype=float)))


def default_closures(fluid=None, P_e=2.0e6, d_star=3.0e-9, n_l=2.0, n_g=2.0,
                     pc_law="linear", pc_lambda=2.0):
    """Closure set used throughout unless configured otherwise."""
    fluid = fluid or FluidParams()
    if pc_law == "linear":
        pc, dpc, pc_inv = linear_pc(P_e)
    elif pc_law == "exponential":
        pc, dpc, pc_inv = exponential_pc(P_e, pc_lambda)
    else:
        raise ValueError(f"unknown capillary law {pc_law!r}")

    def D_lh(s):
        return np.full(np.shape(s), float(d_star))

    return ClosureSet(kr_l=power_kr(n_l), kr_g=power_kr(n_g), pc=pc, dpc=dpc,
                      pc_inv=pc_inv, D_lh=D_lh, fluid=fluid, P_e=P_e)
