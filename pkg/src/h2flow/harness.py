"""Case assembly, run orchestration, parameter sweeps and file output.

Output files of a run directory::

    fields_<step>.csv   x[, y], p_g, p_l, s_l, p, X_l_h   (every ``cadence`` steps and the last)
    energy.csv          one row per accepted step, columns of EnergyReport in order
    assumptions.txt     audit report, human readable
    assumptions.kv      audit report, key = value
    steps.csv           step, t, h, Newton iterations, final residual, method
    summary.json        run-level verdicts (fitted C, drifts, extrema)
    meta.json           config hash, code version, file list
    checkpoint.npz      restart point after the last accepted step
    config.ini          the fully expanded configuration

Every CSV starts with a ``#`` line carrying the code version and config hash.
"""
from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import __version__
from .closures import FluidParams, default_closures
from .config import ConfigError
from .diagnostics import (EnergyReport, TRACKED, audit_assumptions, fit_lyapunov_constant,
                          integrated_quantities, mass_balance, sweep_boundedness)
from .discretization import Problem
from .global_pressure import build_tables
from .grid import RockField, build_grid
from .mms import manufactured, spatial_study, temporal_study
from .time_march import AssumptionViolation, SimConfig, load_checkpoint, run

FIELD_COLUMNS = ("p_g", "p_l", "s_l", "p", "X_l_h")


class SweepFailure(RuntimeError):
    def __init__(self, msg, partial):
        super().__init__(msg)
        self.partial = partial


@dataclass
class Case:
    grid: object
    rock: RockField
    closures: object
    problem: Problem
    sim: SimConfig
    waive: tuple


def _box_mask(grid, box):
    if not box:
        return np.ones(grid.n_cells, dtype=bool)
    m = np.ones(grid.n_cells, dtype=bool)
    for d in range(grid.dim):
        lo, hi = box[2 * d], box[2 * d + 1]
        m &= (grid.centers[:, d] >= lo) & (grid.centers[:, d] <= hi)
    if not m.any():
        raise ConfigError("source box contains no cell centre")
    return m


def build_closures(cfg):
    f = FluidParams(**cfg["fluid"])
    c = cfg["closures"]
    return default_closures(f, P_e=c["P_e"], d_star=c["d_star"], n_l=c["n_l"], n_g=c["n_g"],
                            pc_law=c["pc_law"], pc_lambda=c["pc_lambda"])


def build_case(cfg, waive=()):
    g = cfg["grid"]
    grid = build_grid(g["lengths"], g["cells"], g["boundary"], gravity=g["gravity"] or None,
                      allow_closed=g["allow_closed"])
    n = grid.n_cells
    r = cfg["rock"]
    r_g = cfg.load_field(r["r_g"], n) * _box_mask(grid, r["r_g_box"])
    r_w = cfg.load_field(r["r_w"], n) * _box_mask(grid, r["r_w_box"])
    rock = RockField(cfg.load_field(r["porosity"], n), cfg.load_field(r["permeability"], n), r_g, r_w)
    closures = build_closures(cfg)
    prob = Problem(grid, rock, closures, g["bc_pg"], g["bc_pl"], weighting=cfg["scheme"]["weighting"])
    t, s = cfg["time"], cfg["scheme"]
    sim = SimConfig(T=t["T"], h0=t["T"] / t["steps"], p_g0=cfg.load_field(cfg["initial"]["p_g"], n),
                    p_l0=cfg.load_field(cfg["initial"]["p_l"], n), eps=s["eps"], eta=s["eta"],
                    h_min=t["h_min"], h_max=t["h_max"], adaptive=t["adaptive"], tol=s["tol"],
                    max_iter=s["max_iter"])
    waive = tuple(sorted(set(waive) | set(cfg["audit"]["waive"])))
    return Case(grid, rock, closures, prob, sim, waive)


def _header(cfg, extra=""):
    return f"# h2flow {__version__} config={cfg.hash()}" + (f" {extra}" if extra else "")


def _fmt(v):
    return repr(float(v))


def write_fields(path, cfg, case, tables, state, t, step):
    cl = case.closures
    sec = state.secondary(cl)
    p = tables.global_p(state.p_g, sec.s_l)
    X_l_h = sec.rho_h / sec.rho_lph
    names = ["x", "y"][:case.grid.dim]
    with open(path, "w", newline="") as fh:
        fh.write(_header(cfg, f"t={float(t)!r} step={step}") + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names + list(FIELD_COLUMNS))
        cols = [case.grid.centers[:, d] for d in range(case.grid.dim)]
        cols += [state.p_g, state.p_l, sec.s_l, p, X_l_h]
        for row in zip(*cols):
            w.writerow([_fmt(v) for v in row])


def read_energy_csv(path):
    reports = []
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
    cols = rows[0]
    if cols != EnergyReport.columns():
        raise ValueError(f"{path}: unexpected energy columns")
    for r in rows[1:]:
        reports.append(EnergyReport(**{c: float(v) for c, v in zip(cols, r)}))
    return reports


def write_energy_csv(path, cfg, reports):
    with open(path, "w", newline="") as fh:
        fh.write(_header(cfg) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EnergyReport.columns())
        for r in reports:
            w.writerow([_fmt(v) for v in r.row()])


STEP_COLUMNS = ("step", "t", "h", "iterations", "residual_norm", "method")


def write_steps_csv(path, cfg, rows):
    with open(path, "w", newline="") as fh:
        fh.write(_header(cfg) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STEP_COLUMNS)
        for r in rows:
            w.writerow([r[0], repr(r[1]), repr(r[2]), r[3], repr(r[4]), r[5]])


def read_steps_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(line for line in fh if not line.startswith("#")))
    return [[int(r[0]), float(r[1]), float(r[2]), int(r[3]), float(r[4]), r[5]] for r in rows[1:]]


def summarize(reports, initial, iterations):
    dw, dh = mass_balance(reports, initial)
    diss_min = min(min(r.diss_l, r.diss_g, r.diss_diff, r.diss_eta) for r in reports)
    return {"steps": len(reports),
            "lyapunov_C": fit_lyapunov_constant(reports),
            "min_dissipation": diss_min,
            "s_min": min(r.s_min for r in reports),
            "s_max": max(r.s_max for r in reports),
            "water_drift_max": float(np.max(np.abs(dw))),
            "hydrogen_drift_max": float(np.max(np.abs(dh))),
            "max_newton_iterations": int(max(iterations)) if iterations else 0,
            "integrated": integrated_quantities(reports)}


def execute(cfg, out=None, waive=(), stop_time=None, resume=False):
    """Run one configuration; write artifacts to ``out`` if given.

    With ``resume`` the run restarts from ``out/checkpoint.npz`` and keeps
    the energy rows already written.  Returns (case, trajectory, summary).
    """
    case = build_case(cfg, waive)
    tables = build_tables(case.closures)
    audit = audit_assumptions(case.rock, case.closures, tables,
                              m0_floor=cfg["audit"]["m0_floor"], waive=case.waive)
    if out is not None:
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, "assumptions.txt"), "w") as fh:
            fh.write(_header(cfg) + "\n" + audit.as_text())
        with open(os.path.join(out, "assumptions.kv"), "w") as fh:
            fh.write(_header(cfg) + "\n")
            for k, v in audit.as_kv().items():
                fh.write(f"{k} = {v!r}\n" if isinstance(v, float) else f"{k} = {v}\n")
        with open(os.path.join(out, "config.ini"), "w") as fh:
            fh.write(cfg.serialize())
    if not audit.passed:
        raise AssumptionViolation(audit)

    ckpt = os.path.join(out, "checkpoint.npz") if out is not None and cfg["output"]["checkpoint"] else None
    start, prior, prior_steps = None, [], []
    if resume:
        if ckpt is None or not os.path.exists(ckpt):
            raise FileNotFoundError("no checkpoint to resume from")
        start = load_checkpoint(ckpt)
        if start["meta"].get("config") != cfg.hash():
            raise ConfigError("checkpoint was written by a different configuration")
        prior = [r for r in read_energy_csv(os.path.join(out, "energy.csv")) if r.t <= start["t"]]
        prior_steps = read_steps_csv(os.path.join(out, "steps.csv"))[:start["step"]]

    traj = run(case.sim, case.problem, tables=tables, start=start, stop_time=stop_time,
               checkpoint_path=ckpt, waive=case.waive, checkpoint_meta={"config": cfg.hash()})
    reports = prior + traj.reports
    step0 = start["step"] if start else 0
    step_rows = prior_steps + [
        [step0 + k + 1, float(t), float(h), int(st.iterations), float(st.residual_norm), st.method]
        for k, (t, h, st) in enumerate(zip(traj.times[1:], traj.steps, traj.stats))]
    summary = summarize(reports, traj.initial_contents, [r[3] for r in step_rows])
    if out is not None:
        cadence = cfg["output"]["cadence"]
        n_new = len(traj.times) - 1
        T = case.sim.T
        for k in range(n_new + 1):
            step = step0 + k
            final = k > 0 and abs(traj.times[k] - T) <= 1e-12 * T
            if (k == 0 and start is None) or (k > 0 and (step % cadence == 0 or final)):
                write_fields(os.path.join(out, f"fields_{step:05d}.csv"), cfg, case, tables,
                             traj.states[k], traj.times[k], step)
        write_energy_csv(os.path.join(out, "energy.csv"), cfg, reports)
        write_steps_csv(os.path.join(out, "steps.csv"), cfg, step_rows)
        with open(os.path.join(out, "summary.json"), "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
        files = sorted(f for f in os.listdir(out) if f != "meta.json")
        meta = {"code_version": __version__, "config_hash": cfg.hash(), "files": files,
                "field_columns": ["x", "y"][:case.grid.dim] + list(FIELD_COLUMNS),
                "energy_columns": EnergyReport.columns()}
        with open(os.path.join(out, "meta.json"), "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
    return case, traj, summary


# sweeps -----------------------------------------------------------------

def _member(cfg, param, value, out):
    if param == "h":
        member = cfg.replace(time__steps=int(value))
    else:
        member = cfg.replace(**{f"scheme__{param}": float(value)})
    case, traj, summary = execute(member, out=out)
    steps = member["time"]["steps"]
    cl = case.closures
    times = traj.times
    P = np.array([s.p_g for s in traj.states]) / cl.P_e
    S = np.array([s.secondary(cl).s_l for s in traj.states])
    return {"value": value, "steps": steps, "times": np.asarray(times), "p_g": P, "s_l": S,
            "volumes": case.grid.volumes, "summary": summary,
            "iterations": [s.iterations for s in traj.stats]}


def _on_times(member, times):
    tt = member["times"]
    idx = [int(np.argmin(np.abs(tt - t))) for t in times]
    if np.max(np.abs(tt[idx] - times)) > 1e-9 * max(tt[-1], 1.0):
        raise ValueError("ladder members do not share the comparison times")
    return member["p_g"][idx], member["s_l"][idx]


def successive_differences(members, T):
    """L2(Q_T) norms of u_{k+1} - u_k for (p_g/P_e, s_l) on the coarsest common time grid."""
    coarse = min(m["steps"] for m in members)
    times = np.linspace(0.0, T, coarse + 1)[1:]
    h = T / coarse
    out = {"p_g": [], "s_l": []}
    for a, b in zip(members[:-1], members[1:]):
        pa, sa = _on_times(a, times)
        pb, sb = _on_times(b, times)
        V = a["volumes"]
        out["p_g"].append(float(np.sqrt(h * np.sum(V * (pb - pa) ** 2))))
        out["s_l"].append(float(np.sqrt(h * np.sum(V * (sb - sa) ** 2))))
    return out


def cmd_sweep(cfg, param, ladder=None, out=None, workers=1, min_ratio=None):
    """Run a parameter ladder, check Cauchy behaviour and uniform bounds.

    Successive differences must shrink by ``min_ratio`` per rung (default 2
    for eps/eta; for the h ladder, whose differences shrink at first order
    only asymptotically, any strict decrease).
    """
    if min_ratio is None:
        min_ratio = 1.0 if param == "h" else 2.0
    if param not in ("eps", "eta", "h"):
        raise ConfigError(f"unknown sweep parameter {param!r}")
    ladder = tuple(ladder if ladder is not None else cfg["sweep"][param])
    if len(ladder) < 3:
        raise ConfigError("a sweep ladder needs at least 3 values")
    if param == "h" and any(int(v) % int(min(ladder)) for v in ladder):
        raise ConfigError("h-ladder step counts must be multiples of the coarsest")
    outs = [None if out is None else os.path.join(out, f"{param}_{k:02d}") for k in range(len(ladder))]
    members, error = [], None
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            futs = [ex.submit(_member, cfg, param, v, o) for v, o in zip(ladder, outs)]
            for f in futs:
                try:
                    members.append(f.result())
                except Exception as exc:  # noqa: BLE001 - reported in the partial result
                    error = error or exc
    else:
        for v, o in zip(ladder, outs):
            try:
                members.append(_member(cfg, param, v, o))
            except Exception as exc:  # noqa: BLE001
                error = exc
                break
    report = {"parameter": param, "ladder": list(ladder), "completed": len(members),
              "config_hash": cfg.hash(), "code_version": __version__}
    if error is not None:
        report["error"] = f"{type(error).__name__}: {error}"
        _write_sweep(out, report)
        raise SweepFailure(f"sweep member failed: {error}", report)
    diffs = successive_differences(members, cfg["time"]["T"])
    ratios = {k: [d[i] / d[i + 1] if d[i + 1] > 0 else np.inf for i in range(len(d) - 1)]
              for k, d in diffs.items()}
    series = {q: [m["summary"]["integrated"][q] for m in members] for q in TRACKED}
    bounded = sweep_boundedness(series)
    report.update({
        "differences": diffs, "ratios": ratios,
        "cauchy": all(r > 1.0 and r >= min_ratio for rs in ratios.values() for r in rs)
                  if any(d > 0 for ds in diffs.values() for d in ds) else
                  all(d == 0 for ds in diffs.values() for d in ds),
        "boundedness": bounded,
        "bounded": all(v["bounded"] for v in bounded.values()),
        "max_newton_iterations": [max(m["iterations"]) for m in members],
        "lyapunov_C": [m["summary"]["lyapunov_C"] for m in members],
    })
    _write_sweep(out, report)
    return report


def _jsonable(o):
    if isinstance(o, dict):
        return {k: _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, (np.floating, float)):
        return float(o) if np.isfinite(o) else str(float(o))
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.bool_):
        return bool(o)
    return o


def _write_sweep(out, report):
    if out is None:
        return
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "sweep.json"), "w") as fh:
        json.dump(_jsonable(report), fh, indent=2, sort_keys=True)


# verification -----------------------------------------------------------

def cmd_mms(cfg, solution="smooth", levels=(25, 50, 100), steps=(4, 8, 16), out=None,
            space_order=1.8, time_order=0.9):
    """Spatial and temporal convergence tables for a manufactured solution."""
    r, s = cfg["rock"], cfg["scheme"]
    if isinstance(r["porosity"], str) or isinstance(r["permeability"], str):
        raise ConfigError("MMS needs constant porosity and permeability")
    cl = build_closures(cfg)
    sol = manufactured(solution, cl)
    kw = dict(porosity=r["porosity"], permeability=r["permeability"], eps=s["eps"], eta=s["eta"],
              weighting=s["weighting"])
    space = spatial_study(sol, cl, cells=tuple(levels), **kw)
    time = temporal_study(sol, cl, n_cells=2 * levels[-1], steps=tuple(steps), **kw)
    verdict = {"space_order": space.min_order(), "time_order": time.min_order()}
    verdict["passed"] = verdict["space_order"] >= space_order and verdict["time_order"] >= time_order
    if out is not None:
        os.makedirs(out, exist_ok=True)
        for name, tb in (("mms_space.csv", space), ("mms_time.csv", time)):
            with open(os.path.join(out, name), "w") as fh:
                fh.write(_header(cfg, f"solution={solution}") + "\n" + tb.as_csv())
        with open(os.path.join(out, "mms.json"), "w") as fh:
            json.dump(_jsonable(verdict), fh, indent=2, sort_keys=True)
    return space, time, verdict


def cmd_audit(cfg, waive=()):
    case = build_case(cfg, waive)
    return audit_assumptions(case.rock, case.closures, m0_floor=cfg["audit"]["m0_floor"],
                             waive=case.waive)


def cmd_tables(cfg, out):
    tables = build_tables(build_closures(cfg))
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, "tables.csv")
    tables.dump_csv(path, header=_header(cfg))
    return path
