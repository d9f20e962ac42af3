"""Manufactured-solution verification of the finite-volume scheme.

Sources are obtained by applying the continuous operators to analytic
(p_g, p_l) with fourth-order central differences, so any closure set can
be used without a symbolic engine.  The difference steps are small enough
that the O(delta^4) source error sits far below the discretisation error.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .closures import GAS, LIQUID
from .discretization import Problem
from .grid import RockField, build_grid
from .time_march import SimConfig, run


@dataclass(frozen=True)
class Manufactured:
    name: str
    p_g: Callable  # (x, t) -> array
    p_l: Callable
    T: float
    steady: bool = False


def _smooth(P_e):
    def s(x, t):
        return 0.5 + 0.3 * np.cos(np.pi * x) * np.cos(2.0 * t)

    def p_g(x, t):
        return P_e * (1.0 + 0.5 * x + 0.25 * np.sin(np.pi * x) * (1.0 + t * t))

    return s, p_g


def manufactured(name, closures):
    """Built-in manufactured solutions: "smooth" (transient) and "steady_linear"."""
    P = closures.P_e
    if name == "smooth":
        s, pg = _smooth(P)

        def pl(x, t):
            return pg(x, t) - closures.capillary(s(x, t))
        return Manufactured("smooth", pg, pl, T=0.5)
    if name == "steady_linear":
        # gas pressure on the upper density plateau: every coefficient is
        # constant, the flow is uniform and two-point fluxes are exact
        f = closures.fluid
        p0 = 1.5 * f.rho_max / f.C2
        pc0 = float(closures.capillary(0.6))

        def pg(x, t):
            return p0 * (1.0 + 0.4 * np.asarray(x)) + 0.0 * t

        def pl(x, t):
            return pg(x, t) - pc0
        return Manufactured("steady_linear", pg, pl, T=0.2, steady=True)
    raise KeyError(f"unknown manufactured solution {name!r}")


def _d4(f, x, d):
    return (-f(x + 2 * d) + 8 * f(x + d) - 8 * f(x - d) + f(x - 2 * d)) / (12.0 * d)


def mms_sources(sol, closures, porosity, permeability, eps, eta, x, t, dx=1e-3, dt=1e-3):
    """(r_g, r_w) at points x and time t for the continuous regularised system."""
    cl = closures
    f = cl.fluid
    K = permeability

    def fields(xx, tt):
        pg, pl = sol.p_g(xx, tt), sol.p_l(xx, tt)
        return pg, pl, cl.saturation_from_pc(pg - pl)

    def fluxes(xx):
        pg, pl, s = fields(xx, t)
        dpg = _d4(lambda y: sol.p_g(y, t), xx, dx)
        dpl = _d4(lambda y: sol.p_l(y, t), xx, dx)
        dpc = dpg - dpl
        rho = cl.rho_l_h(pg)
        Xw = f.rho_l_w / (rho + f.rho_l_w)
        Fl = -K * (cl.mobility(LIQUID, s) + eps) * dpl
        Fg = -K * (cl.mobility(GAS, s) + eps) * dpg
        Fh = rho * Fl + f.C1 * rho * Fg - f.C2 * Xw * cl.diffusion(s) * dpg \
            - (f.C1 - 1.0) * eta * rho * dpc
        Fw = Fl + eta * dpc
        return Fh, Fw

    def store(tt):
        pg, _, s = fields(x, tt)
        return cl.m_of_s(s) * cl.rho_l_h(pg), s

    div_h = _d4(lambda y: fluxes(y)[0], x, dx)
    div_w = _d4(lambda y: fluxes(y)[1], x, dx)
    if sol.steady:
        dth = dtw = 0.0
    else:
        dth = _d4(lambda tt: store(tt)[0], t, dt)
        dtw = _d4(lambda tt: store(tt)[1], t, dt)
    r_g = porosity * dth + div_h
    r_w = f.rho_l_w * (porosity * dtw + div_w)
    return r_g, r_w


def run_mms(sol, closures, n_cells, n_steps, porosity=0.3, permeability=1.0, eps=1e-4,
            eta=1e-3, weighting="centered", tol=1e-10):
    """Solve one level; returns L2(Q_T) errors of p_g, p_l, s_l and the trajectory."""
    g = build_grid([1.0], [n_cells], "left=dirichlet, right=dirichlet")
    rock = RockField.uniform(g, porosity=porosity, permeability=permeability)
    prob = Problem(g, rock, closures, weighting=weighting)
    x = g.centers[:, 0]
    xb = g.face_center[prob.dirichlet][:, 0]

    def source_fn(t):
        return mms_sources(sol, closures, porosity, permeability, eps, eta, x, t)

    def boundary_fn(t):
        return sol.p_g(xb, t), sol.p_l(xb, t)

    cfg = SimConfig(T=sol.T, h0=sol.T / n_steps, p_g0=sol.p_g(x, 0.0), p_l0=sol.p_l(x, 0.0),
                    eps=eps, eta=eta, tol=tol, source_fn=source_fn, boundary_fn=boundary_fn)
    # signed manufactured sources: the nonnegativity hypothesis is waived
    traj = run(cfg, prob, waive=("H6",))
    times = np.linspace(0.0, sol.T, n_steps + 1)[1:]
    h = sol.T / n_steps
    err = {"p_g": 0.0, "p_l": 0.0, "s_l": 0.0}
    P = closures.P_e
    for t, st in zip(times, traj.at_times(times)):
        pg_ex, pl_ex = sol.p_g(x, t), sol.p_l(x, t)
        s_ex = closures.saturation_from_pc(pg_ex - pl_ex)
        s_num = st.secondary(closures).s_l
        w = h * g.volumes
        err["p_g"] += np.sum(w * ((st.p_g - pg_ex) / P) ** 2)
        err["p_l"] += np.sum(w * ((st.p_l - pl_ex) / P) ** 2)
        err["s_l"] += np.sum(w * (s_num - s_ex) ** 2)
    return {k: float(np.sqrt(v)) for k, v in err.items()}, traj


@dataclass
class ConvergenceTable:
    """Errors per refinement level and observed orders between consecutive levels.

    ``ratio`` is the refinement factor of the studied variable (2 for halving).
    """

    kind: str
    levels: list
    errors: dict = field(default_factory=dict)
    ratio: float = 2.0

    @property
    def orders(self):
        out = {}
        for k, e in self.errors.items():
            e = np.asarray(e, dtype=float)
            with np.errstate(divide="ignore", invalid="ignore"):
                out[k] = list(np.log(e[:-1] / e[1:]) / np.log(self.ratio))
        return out

    def min_order(self, keys=("p_g", "p_l", "s_l")):
        return float(min(min(self.orders[k]) for k in keys))

    def as_csv(self):
        keys = list(self.errors)
        lines = ["level," + ",".join(f"err_{k}" for k in keys) + "," + ",".join(f"order_{k}" for k in keys)]
        orders = self.orders
        for i, lev in enumerate(self.levels):
            errs = [f"{self.errors[k][i]:.6e}" for k in keys]
            ords = ["" if i == 0 else f"{orders[k][i - 1]:.4f}" for k in keys]
            lines.append(f"{lev}," + ",".join(errs) + "," + ",".join(ords))
        return "\n".join(lines) + "\n"


def spatial_study(sol, closures, cells=(25, 50, 100), steps_coarse=8, **kw):
    """Refine dx and h together with h proportional to dx^2."""
    table = ConvergenceTable("space", [f"N={n}" for n in cells],
                             {"p_g": [], "p_l": [], "s_l": []})
    for k, n in enumerate(cells):
        m = steps_coarse * (cells[k] // cells[0]) ** 2
        e, _ = run_mms(sol, closures, n, m, **kw)
        for key in table.errors:
            table.errors[key].append(e[key])
    return table


def temporal_study(sol, closures, n_cells=200, steps=(4, 8, 16), **kw):
    """Halve h on a fixed grid; errors are measured against a fine-h reference
    on the same grid so that the spatial error does not pollute the orders."""
    ref_steps = 16 * steps[-1]
    _, ref = run_mms(sol, closures, n_cells, ref_steps, **kw)
    table = ConvergenceTable("time", [f"M={m}" for m in steps], {"p_g": [], "p_l": [], "s_l": []})
    P = closures.P_e
    for m in steps:
        _, tr = run_mms(sol, closures, n_cells, m, **kw)
        times = np.linspace(0.0, sol.T, m + 1)[1:]
        h = sol.T / m
        acc = {"p_g": 0.0, "p_l": 0.0, "s_l": 0.0}
        vol = 1.0 / n_cells
        for a, b in zip(tr.at_times(times), ref.at_times(times)):
            acc["p_g"] += h * vol * np.sum(((a.p_g - b.p_g) / P) ** 2)
            acc["p_l"] += h * vol * np.sum(((a.p_l - b.p_l) / P) ** 2)
            acc["s_l"] += h * vol * np.sum((a.secondary(closures).s_l - b.secondary(closures).s_l) ** 2)
        for key in acc:
            table.errors[key].append(float(np.sqrt(acc[key])))
    return table
