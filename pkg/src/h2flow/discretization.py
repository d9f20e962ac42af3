"""Residual of the regularised implicit-Euler finite-volume system.

Unknowns are the cell pressures (p_g, p_l).  Per cell the hydrogen-mass
residual is

    phi (m(Z(s)) rho(p_g) - m(s*) rho(p_g*)) / h + div_h(fluxes) - r_g

and the water-volume residual

    phi (Z(s) - s*) / h + div_h(fluxes) - r_w / rho_l_w,

with two-point fluxes assembled in :mod:`h2flow._kernels`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .closures import GAS, LIQUID, Z
from .grid import face_transmissibility


@dataclass(frozen=True)
class RegParams:
    eps: float = 0.0
    eta: float = 0.0
    h: float = 1.0

    def __post_init__(self):
        if self.eps < 0 or self.eta < 0:
            raise ValueError("eps and eta must be nonnegative")
        if not self.h > 0:
            raise ValueError("time step must be positive")


@dataclass
class Secondary:
    s_l: np.ndarray
    s_g: np.ndarray
    X_h: np.ndarray
    X_w: np.ndarray
    rho_h: np.ndarray
    rho_lph: np.ndarray
    rho_gph: np.ndarray
    M_l: np.ndarray
    M_g: np.ndarray
    D: np.ndarray
    m: np.ndarray


def derive_secondary(p_g, p_l, closures):
    """Saturations, fractions, densities and mobilities from the pressures."""
    p_g = np.asarray(p_g, dtype=float)
    p_l = np.asarray(p_l, dtype=float)
    s = closures.saturation_from_pc(p_g - p_l)
    rho = closures.rho_l_h(p_g)
    X_h = rho / (rho + closures.fluid.rho_l_w)
    return Secondary(s_l=s, s_g=1.0 - s, X_h=X_h, X_w=1.0 - X_h, rho_h=rho,
                     rho_lph=rho + closures.fluid.rho_l_w,
                     rho_gph=closures.fluid.C1 * rho,
                     M_l=closures.mobility(LIQUID, s), M_g=closures.mobility(GAS, s),
                     D=closures.diffusion(s), m=closures.m_of_s(s))


@dataclass
class State:
    p_g: np.ndarray
    p_l: np.ndarray

    def secondary(self, closures):
        return derive_secondary(self.p_g, self.p_l, closures)

    def copy(self):
        return State(self.p_g.copy(), self.p_l.copy())


@dataclass
class Residual:
    hydrogen: np.ndarray
    water: np.ndarray
    face_h: np.ndarray  # outward flux per flux-carrying face
    face_w: np.ndarray


class Problem:
    """Grid, rock and closures with the face data the kernels need.

    Dirichlet faces get ghost cells carrying the boundary pressures
    (``bc_pg``, ``bc_pl``, one value per Dirichlet face; default 0).
    ``weighting`` is "upwind" (phase-potential upwinding) or "centered".
    """

    def __init__(self, grid, rock, closures, bc_pg=0.0, bc_pl=0.0, weighting="upwind"):
        if weighting not in ("upwind", "centered"):
            raise ValueError(f"unknown weighting {weighting!r}")
        self.grid, self.rock, self.closures = grid, rock, closures
        self.weighting = weighting
        n = grid.n_cells
        for name in ("porosity", "permeability", "r_g", "r_w"):
            if np.shape(getattr(rock, name)) != (n,):
                raise ValueError(f"rock field {name} does not match the grid")
        self.flux_faces = grid.flux_faces
        self.dirichlet = grid.dirichlet_faces
        fc = grid.face_cells[self.flux_faces]
        c1 = fc[:, 1].copy()
        ghost = {f: n + k for k, f in enumerate(self.dirichlet)}
        for k, f in enumerate(self.flux_faces):
            if c1[k] < 0:
                c1[k] = ghost[f]
        self.c0 = np.ascontiguousarray(fc[:, 0])
        self.c1 = np.ascontiguousarray(c1)
        self.is_dirichlet_flux = self.c1 >= n
        self.T = face_transmissibility(grid, rock.permeability)[self.flux_faces]
        self.G = grid.geometric_factor()[self.flux_faces]
        self.gdz = grid.gravity_drop()[self.flux_faces]
        nd = self.dirichlet.size
        self.bc_pg = np.broadcast_to(np.asarray(bc_pg, dtype=float), (nd,)).copy()
        self.bc_pl = np.broadcast_to(np.asarray(bc_pl, dtype=float), (nd,)).copy()
        self.V = grid.volumes
        self.phi = rock.porosity
        self._neighbors = None

    @property
    def n_cells(self):
        return self.grid.n_cells

    def with_boundary(self, bc_pg, bc_pl):
        self.bc_pg = np.broadcast_to(np.asarray(bc_pg, dtype=float), self.bc_pg.shape).copy()
        self.bc_pl = np.broadcast_to(np.asarray(bc_pl, dtype=float), self.bc_pl.shape).copy()
        return self

    def extend(self, p_g, p_l):
        return np.concatenate([p_g, self.bc_pg]), np.concatenate([p_l, self.bc_pl])

    def face_fluxes(self, p_g, p_l, reg, frozen=None):
        """Per-cell flux divergence numerators and per-face fluxes.

        ``frozen`` (a pair of pressure arrays) freezes every coefficient and
        the upwind directions at that state (Picard linearisation).
        """
        cl = self.closures
        pg, pl = self.extend(p_g, p_l)
        if frozen is None:
            qg, ql = pg, pl
        else:
            qg, ql = self.extend(*frozen)
        sec = derive_secondary(qg, ql, cl)
        return _kernels.face_fluxes(
            self.c0, self.c1, self.T, self.G, self.gdz, pg, pl, qg, ql,
            sec.M_l, sec.M_g, sec.rho_h, sec.X_w, sec.D, sec.rho_lph, sec.rho_gph,
            float(reg.eps), float(reg.eta), float(cl.fluid.C1), float(cl.fluid.C2),
            self.n_cells, self.weighting == "centered")

    def accumulation(self, p_g, p_l, old_sec, h):
        cl = self.closures
        s = Z(cl.saturation_from_pc(p_g - p_l))
        rho = cl.rho_l_h(p_g)
        acc_h = self.phi * (cl.m_of_s(s) * rho - old_sec.m * old_sec.rho_h) / h
        acc_w = self.phi * (s - old_sec.s_l) / h
        return acc_h, acc_w

    def residual(self, p_g, p_l, old_sec, reg, r_g=None, r_w=None, frozen=None):
        r_g = self.rock.r_g if r_g is None else r_g
        r_w = self.rock.r_w if r_w is None else r_w
        div_h, div_w, fh, fw = self.face_fluxes(p_g, p_l, reg, frozen)
        acc_h, acc_w = self.accumulation(p_g, p_l, old_sec, reg.h)
        Rh = acc_h + div_h / self.V - r_g
        Rw = acc_w + div_w / self.V - r_w / self.closures.fluid.rho_l_w
        return Residual(Rh, Rw, fh, fw)

    # scaled interleaved form used by the nonlinear solver ------------------
    def scales(self, reg):
        phi1 = float(np.max(self.phi))
        return reg.h / (self.closures.fluid.rho_max * phi1), reg.h / phi1

    def pack(self, p_g, p_l):
        x = np.empty(2 * self.n_cells)
        x[0::2] = p_g / self.closures.P_e
        x[1::2] = p_l / self.closures.P_e
        return x

    def unpack(self, x):
        P = self.closures.P_e
        return x[0::2] * P, x[1::2] * P

    def scaled_residual_fn(self, old_sec, reg, r_g=None, r_w=None):
        sh, sw = self.scales(reg)

        def F(x, frozen_x=None):
            p_g, p_l = self.unpack(x)
            frozen = None if frozen_x is None else self.unpack(frozen_x)
            R = self.residual(p_g, p_l, old_sec, reg, r_g, r_w, frozen)
            out = np.empty_like(x)
            out[0::2] = R.hydrogen * sh
            out[1::2] = R.water * sw
            return out
        return F

    # Jacobian ------------------------------------------------------------
    def neighbors(self):
        if self._neighbors is None:
            n = self.n_cells
            nb = [{i} for i in range(n)]
            for i, j in self.grid.face_cells:
                if j >= 0:
                    nb[i].add(j)
                    nb[j].add(i)
            self._neighbors = [sorted(v) for v in nb]
        return self._neighbors

    def jacobian_fn(self, F):
        return ColoredJacobian(self.neighbors(), F)


def distance2_coloring(neighbors):
    """Greedy colouring so that cells sharing a colour have disjoint stencils."""
    n = len(neighbors)
    color = -np.ones(n, dtype=np.int64)
    for i in range(n):
        banned = set()
        for j in neighbors[i]:
            for k in neighbors[j]:
                if color[k] >= 0:
                    banned.add(int(color[k]))
        c = 0
        while c in banned:
            c += 1
        color[i] = c
    return color


class ColoredJacobian:
    """Sparse Jacobian of an interleaved two-unknowns-per-cell residual.

    Columns are probed in groups whose stencils do not overlap, with
    central differences of step ``delta * max(1, |x|)``.
    """

    accepts_fine = True

    def __init__(self, neighbors, F, delta=1e-6):
        self.F = F
        self.delta = delta
        self.n = len(neighbors)
        self.color = distance2_coloring(neighbors)
        self.groups = []
        for c in range(int(self.color.max()) + 1):
            owner = -np.ones(self.n, dtype=np.int64)
            for i in np.flatnonzero(self.color == c):
                owner[neighbors[i]] = i
            rows_cell = np.flatnonzero(owner >= 0)
            self.groups.append((np.flatnonzero(self.color == c), rows_cell, owner[rows_cell]))

    def __call__(self, x, frozen_x=None, fine=False):
        F = self.F
        kw = {} if frozen_x is None else {"frozen_x": frozen_x}
        delta = self.delta * (1e-2 if fine else 1.0)
        rows, cols, vals = [], [], []
        for cells, rcell, owner in self.groups:
            for k in (0, 1):
                idx = 2 * cells + k
                step = delta * np.maximum(1.0, np.abs(x[idx]))
                xp = x.copy()
                xm = x.copy()
                xp[idx] += step
                xm[idx] -= step
                d = (F(xp, **kw) - F(xm, **kw))
                # divide each column by its own step
                stepcol = np.zeros(2 * self.n)
                stepcol[idx] = 2.0 * step
                col = 2 * owner + k
                for r in (0, 1):
                    rr = 2 * rcell + r
                    rows.append(rr)
                    cols.append(col)
                    vals.append(d[rr] / stepcol[col])
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        vals = np.concatenate(vals)
        return sp.csc_matrix((vals, (rows, cols)), shape=(2 * self.n, 2 * self.n))


def assemble_residual(state_new, state_old, grid, rock, closures, reg, r_g=None, r_w=None,
                      bc_pg=0.0, bc_pl=0.0, weighting="upwind"):
    """One-shot residual evaluation (builds a :class:`Problem`)."""
    if np.shape(state_new.p_g) != (grid.n_cells,) or np.shape(state_old.p_g) != (grid.n_cells,):
        raise ValueError("state does not match the grid")
    prob = Problem(grid, rock, closures, bc_pg, bc_pl, weighting)
    return prob.residual(state_new.p_g, state_new.p_l, state_old.secondary(closures), reg, r_g, r_w)


def phase_flux(T, M_up, dp, rho_face=0.0, gdz=0.0, eps=0.0):
    """Two-point Darcy flux from cell i to j: ``T (M^eps dp + M rho g.dz)``."""
    return T * ((M_up + eps) * dp + M_up * rho_face * gdz)


def henry_diffusive_flux(C2, Xw_face, D_face, G, dp_g):
    return C2 * Xw_face * D_face * G * dp_g


def eta_fluxes(eta, C1, rho_face, G, dpc):
    """(hydrogen, water) vanishing-viscosity fluxes for a jump ``dpc`` in p_g - p_l."""
    return (C1 - 1.0) * eta * rho_face * G * dpc, -eta * G * dpc
