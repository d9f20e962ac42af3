"""Implicit-Euler time marching with step control and checkpoints."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .diagnostics import audit_assumptions, contents, energy_report
from .discretization import RegParams, State
from .global_pressure import build_tables, energy_functions
from .solver import LinearSolveFailure, NonConvergence, solve_step

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = "h2flow-checkpoint/1"


class StepUnderflow(RuntimeError):
    def __init__(self, msg, trajectory):
        super().__init__(msg)
        self.trajectory = trajectory


class PositivityViolation(RuntimeError):
    pass


class AssumptionViolation(ValueError):
    def __init__(self, report):
        super().__init__("assumption audit failed: " + ", ".join(report.failures))
        self.report = report


@dataclass
class SimConfig:
    """Time-marching settings.

    ``adaptive=False`` is the uniform-step mode: accepted times always
    include every k*h0.  A failed step is still halved there, and the step
    then grows back (x1.5) to ``h0``.
    ``source_fn(t)`` and ``boundary_fn(t)`` optionally return per-cell
    sources and per-Dirichlet-face pressures at time t.
    """

    T: float
    h0: float
    p_g0: np.ndarray
    p_l0: np.ndarray
    eps: float = 0.0
    eta: float = 0.0
    h_min: float = 0.0
    h_max: float = 0.0
    adaptive: bool = False
    grow: float = 1.5
    tol: float = 1e-9
    max_iter: int = 30
    source_fn: Optional[Callable] = None
    boundary_fn: Optional[Callable] = None
    check_positivity: bool = True

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("final time must be positive")
        if not self.h0 > 0:
            raise ValueError("initial step must be positive")
        if not self.h_min:
            self.h_min = self.h0 * 2.0 ** -20
        if not self.h_max:
            self.h_max = self.h0
        self.p_g0 = np.asarray(self.p_g0, dtype=float)
        self.p_l0 = np.asarray(self.p_l0, dtype=float)


@dataclass
class Trajectory:
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    stats: list = field(default_factory=list)
    reports: list = field(default_factory=list)
    steps: list = field(default_factory=list)  # accepted step sizes
    initial_contents: tuple = (0.0, 0.0)

    def at_times(self, times, rtol=1e-9):
        """States at the given times (each must be an accepted time)."""
        tt = np.asarray(self.times)
        scale = max(tt[-1], 1.0)
        out = []
        for t in times:
            k = int(np.argmin(np.abs(tt - t)))
            if abs(tt[k] - t) > rtol * scale:
                raise KeyError(f"time {t} was not visited")
            out.append(self.states[k])
        return out


def _check_initial(prob, p_g0, p_l0):
    if p_g0.shape != (prob.n_cells,) or p_l0.shape != (prob.n_cells,):
        raise ValueError("initial pressures do not match the grid")
    dp = p_g0 - p_l0
    P = prob.closures.P_e
    if np.any(dp < -1e-12 * P) or np.any(dp > P * (1 + 1e-12)):
        raise ValueError("initial liquid saturation outside [0, 1]")


def advance(prob, state, t, h, cfg):
    """One implicit step of size h from (state, t).  Returns (new_state, stats, r_g, r_w)."""
    reg = RegParams(cfg.eps, cfg.eta, h)
    if cfg.boundary_fn is not None:
        prob.with_boundary(*cfg.boundary_fn(t + h))
    if cfg.source_fn is not None:
        r_g, r_w = cfg.source_fn(t + h)
    else:
        r_g, r_w = prob.rock.r_g, prob.rock.r_w
    old_sec = state.secondary(prob.closures)
    F = prob.scaled_residual_fn(old_sec, reg, r_g, r_w)
    J = prob.jacobian_fn(F)
    x0 = prob.pack(state.p_g, state.p_l)
    x, stats = solve_step(F, J, x0, tol=cfg.tol, max_iter=cfg.max_iter,
                          picard_jacobian_fn=lambda x: J(x, frozen_x=x))
    p_g, p_l = prob.unpack(x)
    return State(p_g, p_l), stats, r_g, r_w


def run(cfg, prob, tables=None, start=None, stop_time=None, checkpoint_path=None, waive=(),
        checkpoint_meta=None):
    """March from t=0 (or from a checkpoint dict ``start``) to T.

    The assumption audit runs first; checks named in ``waive`` are ignored.
    ``stop_time`` ends the march early (used for interrupted runs); a
    checkpoint is written to ``checkpoint_path`` after every accepted step.
    """
    cl = prob.closures
    tables = tables if tables is not None else build_tables(cl)
    audit = audit_assumptions(prob.rock, cl, tables, waive=waive)
    if not audit.passed:
        raise AssumptionViolation(audit)
    efuns = energy_functions(cl)
    traj = Trajectory()
    if start is None:
        _check_initial(prob, cfg.p_g0, cfg.p_l0)
        state = State(cfg.p_g0.copy(), cfg.p_l0.copy())
        if cfg.boundary_fn is not None:
            prob.with_boundary(*cfg.boundary_fn(0.0))
        t, h, step = 0.0, cfg.h0, 0
        traj.initial_contents = contents(prob, state)
    else:
        state = State(start["p_g"].copy(), start["p_l"].copy())
        t, h, step = start["t"], start["h"], start["step"]
        traj.initial_contents = tuple(start["initial_contents"])
    traj.times.append(t)
    traj.states.append(state)
    end = cfg.T if stop_time is None else min(stop_time, cfg.T)
    tiny = 1e-12 * cfg.T
    while t < end - tiny:
        target = end
        if not cfg.adaptive:
            # land on every grid time k*h0 even after a halving
            target = min(end, (np.floor(t / cfg.h0 + 1e-9) + 1) * cfg.h0)
        h_try = min(h, target - t)
        if target - (t + h_try) < tiny:
            h_try = target - t
        try:
            new, stats, r_g, r_w = advance(prob, state, t, h_try, cfg)
        except (NonConvergence, LinearSolveFailure) as exc:
            h = h_try / 2
            log.info("step at t=%.6g failed (%s); h -> %.3g", t, exc, h)
            if h < cfg.h_min:
                raise StepUnderflow(f"time step underflow at t={t:.6g}", traj) from exc
            continue
        reg = RegParams(cfg.eps, cfg.eta, h_try)
        rep = energy_report(state, new, reg, prob, tables, efuns, t=t + h_try, r_g=r_g, r_w=r_w)
        if cfg.check_positivity and rep.s_min < -10 * cfg.tol:
            raise PositivityViolation(f"min s_l = {rep.s_min:.3e} at t={t + h_try:.6g}")
        t = t + h_try
        step += 1
        state = new
        traj.times.append(t)
        traj.states.append(state)
        traj.stats.append(stats)
        traj.reports.append(rep)
        traj.steps.append(h_try)
        if h_try >= h:
            cap = cfg.h_max if cfg.adaptive else cfg.h0
            h = min(h * cfg.grow, cap)
        if checkpoint_path is not None:
            save_checkpoint(checkpoint_path, state, t, h, step, traj.initial_contents,
                            meta=checkpoint_meta)
    return traj


def save_checkpoint(path, state, t, h, step, initial_contents, meta=None):
    header = {"format": CHECKPOINT_VERSION, "t": t, "h": h, "step": step,
              "n_cells": int(state.p_g.size), "initial_contents": list(initial_contents),
              "meta": meta or {}}
    with open(path, "wb") as fh:
        np.savez(fh, header=np.array(json.dumps(header)), p_g=state.p_g, p_l=state.p_l)


def load_checkpoint(path):
    with np.load(path) as z:
        header = json.loads(str(z["header"]))
        if header.get("format") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint format {header.get('format')!r}")
        return {"p_g": z["p_g"].copy(), "p_l": z["p_l"].copy(), "t": header["t"],
                "h": header["h"], "step": header["step"],
                "initial_contents": header["initial_contents"], "meta": header["meta"]}


def with_T(cfg, T):
    return replace(cfg, T=T)
