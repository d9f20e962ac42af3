"""Runtime checks of the energy structure, conservation and model assumptions."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .closures import GAS, LIQUID, Z, _GL_W, _GL_X
from .discretization import derive_secondary


@dataclass
class EnergyReport:
    """Per-step terms of the discrete energy estimate and mass bookkeeping.

    ``diss_eta`` already carries the factor eta.  ``lyapunov`` is
    dE_Hg - C1 dE_Pc + C1 k0 (diss_l + diss_g) + C1 diss_eta and
    ``source_bound`` is |r_g|^2 + |r_w|^2.
    """

    t: float = 0.0
    h: float = 0.0
    dE_Hg: float = 0.0
    dE_Pc: float = 0.0
    diss_l: float = 0.0
    diss_g: float = 0.0
    diss_diff: float = 0.0
    diss_eta: float = 0.0
    src_g: float = 0.0
    src_w: float = 0.0
    grad_p: float = 0.0
    grad_pg: float = 0.0
    grad_B: float = 0.0
    eta_grad_pc: float = 0.0
    s_min: float = 0.0
    s_max: float = 0.0
    water: float = 0.0
    hydrogen: float = 0.0
    water_in: float = 0.0
    hydrogen_in: float = 0.0
    lyapunov: float = 0.0
    source_bound: float = 0.0

    @classmethod
    def columns(cls):
        return [f.name for f in fields(cls)]

    def row(self):
        return [getattr(self, c) for c in self.columns()]


def _face_upwind(prob, pg, pl, sec):
    """Face mobilities as the scheme weights them (unregularised)."""
    c0, c1 = prob.c0, prob.c1
    if prob.weighting == "centered":
        return 0.5 * (sec.M_l[c0] + sec.M_l[c1]), 0.5 * (sec.M_g[c0] + sec.M_g[c1])
    rl = 0.5 * (sec.rho_lph[c0] + sec.rho_lph[c1])
    rg = 0.5 * (sec.rho_gph[c0] + sec.rho_gph[c1])
    ul = np.where(pl[c0] - pl[c1] + rl * prob.gdz >= 0, c0, c1)
    ug = np.where(pg[c0] - pg[c1] + rg * prob.gdz >= 0, c0, c1)
    return sec.M_l[ul], sec.M_g[ug]


def contents(prob, state):
    """(water volume, hydrogen mass) stored in the domain."""
    cl = prob.closures
    sec = state.secondary(cl)
    s = Z(sec.s_l)
    water = np.sum(prob.V * prob.phi * s)
    hyd = np.sum(prob.V * prob.phi * cl.m_of_s(s) * sec.rho_h)
    return float(water), float(hyd)


def energy_report(old, new, reg, prob, tables, efuns, t=0.0, r_g=None, r_w=None):
    """Evaluate every term of the per-step energy estimate for one step."""
    cl = prob.closures
    C1 = cl.fluid.C1
    r_g = prob.rock.r_g if r_g is None else r_g
    r_w = prob.rock.r_w if r_w is None else r_w
    h = reg.h
    V, phi = prob.V, prob.phi
    so = old.secondary(cl)
    sn = new.secondary(cl)
    rep = EnergyReport(t=float(t), h=float(h))
    rep.dE_Hg = float(np.sum(V * phi * (sn.m * efuns.H_g(new.p_g) - so.m * efuns.H_g(old.p_g))) / h)
    rep.dE_Pc = float(np.sum(V * phi * (efuns.Pc_primitive(sn.s_l) - efuns.Pc_primitive(so.s_l))) / h)

    pg, pl = prob.extend(new.p_g, new.p_l)
    sec = derive_secondary(pg, pl, cl)
    c0, c1, G = prob.c0, prob.c1, prob.G
    Ml, Mg = _face_upwind(prob, pg, pl, sec)
    dpl = pl[c0] - pl[c1]
    dpg = pg[c0] - pg[c1]
    rep.diss_l = float(np.sum(G * Ml * dpl ** 2))
    rep.diss_g = float(np.sum(G * Mg * dpg ** 2))
    Xw = 0.5 * (sec.X_w[c0] + sec.X_w[c1])
    D = 0.5 * (sec.D[c0] + sec.D[c1])
    rep.diss_diff = float(np.sum(G * cl.fluid.C2 * Xw * D * dpg ** 2))
    dpc = (pg - pl)[c0] - (pg - pl)[c1]
    rep.diss_eta = float(reg.eta * np.sum(G * dpc ** 2))
    rep.src_g = float(np.sum(V * r_g ** 2))
    rep.src_w = float(np.sum(V * r_w ** 2))
    p = tables.global_p(pg, sec.s_l)
    rep.grad_p = float(np.sum(G * (p[c0] - p[c1]) ** 2))
    rep.grad_pg = float(np.sum(G * dpg ** 2))
    B = tables.eval_B(sec.s_l)
    rep.grad_B = float(np.sum(G * (B[c0] - B[c1]) ** 2))
    pcs = cl.capillary(sec.s_l)
    rep.eta_grad_pc = float(reg.eta * np.sum(G * (pcs[c0] - pcs[c1]) ** 2))
    rep.s_min = float(np.min(sn.s_l))
    rep.s_max = float(np.max(sn.s_l))

    rep.water, rep.hydrogen = contents(prob, new)
    R = prob.residual(new.p_g, new.p_l, so, reg, r_g, r_w)
    bd = prob.is_dirichlet_flux
    rep.water_in = float(h * (np.sum(V * r_w) / cl.fluid.rho_l_w - np.sum(R.face_w[bd])))
    rep.hydrogen_in = float(h * (np.sum(V * r_g) - np.sum(R.face_h[bd])))

    k0 = float(np.min(prob.rock.permeability))
    rep.lyapunov = (rep.dE_Hg - C1 * rep.dE_Pc + C1 * k0 * (rep.diss_l + rep.diss_g)
                    + C1 * rep.diss_eta)
    rep.source_bound = rep.src_g + rep.src_w
    return rep


def fit_lyapunov_constant(reports):
    """Smallest C with lyapunov <= C (source_bound + 1) on every step."""
    return max(0.0, max(r.lyapunov / (r.source_bound + 1.0) for r in reports))


def concavity_margin(p_g, p_g_star, s, s_star, closures, efuns):
    """Pointwise LHS - RHS of the one-step concavity inequality (>= 0)."""
    cl = closures
    C1 = cl.fluid.C1
    s = Z(np.asarray(s, dtype=float))
    s_star = Z(np.asarray(s_star, dtype=float))
    p_g = np.asarray(p_g, dtype=float)
    p_g_star = np.asarray(p_g_star, dtype=float)
    rho, rho_s = cl.rho_l_h(p_g), cl.rho_l_h(p_g_star)
    m, m_s = cl.m_of_s(s), cl.m_of_s(s_star)
    g = efuns.g_g(p_g)
    p_l = p_g - cl.capillary(s)
    lhs = (rho * m - rho_s * m_s) * g + (s - s_star) * (C1 * p_l - p_g)
    rhs = (efuns.H_g(p_g) * m - efuns.H_g(p_g_star) * m_s
           - C1 * efuns.Pc_primitive(s) + C1 * efuns.Pc_primitive(s_star))
    return lhs - rhs


def concavity_check(p_g, p_g_star, s, s_star, closures, efuns):
    """Minimum margin and the magnitude scale it should be compared with."""
    margin = concavity_margin(p_g, p_g_star, s, s_star, closures, efuns)
    cl = closures
    scale = np.max(np.abs(cl.fluid.C1 * np.asarray(p_g)) + np.abs(cl.fluid.C1 * np.asarray(p_g_star))
                   + cl.fluid.C1 * cl.P_e)
    return float(np.min(margin)), float(scale)


def energy_two_ways(p_g, s, closures, efuns):
    """E from its defining expression (with N = int_0^s z pc'(z) dz) and from m H_g - C1 Pc."""
    cl = closures
    C1 = cl.fluid.C1
    s = Z(np.asarray(s, dtype=float))
    p_g = np.asarray(p_g, dtype=float)
    z = s[..., None] * _GL_X
    N = s * np.sum(z * cl.dcapillary(z) * _GL_W, axis=-1)
    p_l = p_g - cl.capillary(s)
    direct = cl.m_of_s(s) * cl.rho_l_h(p_g) * efuns.g_g(p_g) + s * (C1 * p_l - p_g) + C1 * N - C1 * p_g
    simplified = cl.m_of_s(s) * efuns.H_g(p_g) - C1 * efuns.Pc_primitive(s)
    return direct, simplified


def fundamental_equality(tables, closures, s, p_g, dx):
    """Relative defect of M|grad p|^2 + (Ml Mg/M)|grad pc|^2 = Ml|grad pl|^2 + Mg|grad pg|^2.

    ``s`` and ``p_g`` are samples on a uniform 1D lattice of spacing ``dx``;
    gradients use fourth-order central differences on the interior.
    """
    s = np.asarray(s, dtype=float)
    p_g = np.asarray(p_g, dtype=float)
    pc = closures.capillary(s)
    p_l = p_g - pc
    p = tables.global_p(p_g, s)

    def d(u):
        return (u[:-4] - 8 * u[1:-3] + 8 * u[3:-1] - u[4:]) / (12 * dx)

    si = s[2:-2]
    Ml = closures.mobility(LIQUID, si)
    Mg = closures.mobility(GAS, si)
    M = Ml + Mg
    lhs = M * d(p) ** 2 + Ml * Mg / M * d(pc) ** 2
    rhs = Ml * d(p_l) ** 2 + Mg * d(p_g) ** 2
    return float(np.max(np.abs(lhs - rhs)) / np.max(np.abs(rhs)))


def holder_exponent(tables, n=400):
    """Fitted Hoelder order of B^-1 from its endpoint behaviour, capped at 1."""
    Bt = tables.B_total
    deltas = np.logspace(-10, -2, n) * Bt
    s0 = tables.B_inverse(deltas)
    s1 = 1.0 - tables.B_inverse(Bt - deltas)
    thetas = []
    for sv in (s0, s1):
        ok = sv > 0
        if ok.sum() > 2:
            slope = np.polyfit(np.log(deltas[ok] / Bt), np.log(sv[ok]), 1)[0]
            thetas.append(slope)
    theta = min(1.0, min(thetas)) if thetas else 1.0
    rng = np.random.default_rng(0)
    a, b = rng.uniform(0, Bt, (2, 2000))
    num = np.abs(tables.B_inverse(a) - tables.B_inverse(b))
    den = np.abs(a - b) ** theta
    const = float(np.max(num / np.maximum(den, 1e-300)))
    return float(theta), const


@dataclass
class AssumptionReport:
    measured: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)  # name -> (passed, message)
    waived: tuple = ()

    @property
    def passed(self):
        return all(ok or name in self.waived for name, (ok, _) in self.checks.items())

    @property
    def failures(self):
        return [n for n, (ok, _) in self.checks.items() if not ok and n not in self.waived]

    def as_text(self):
        lines = []
        for name, (ok, msg) in self.checks.items():
            state = "PASS" if ok else ("WAIVED" if name in self.waived else "FAIL")
            lines.append(f"{name}: {state}  {msg}")
        lines.append("")
        for k, v in self.measured.items():
            lines.append(f"{k} = {v!r}")
        return "\n".join(lines) + "\n"

    def as_kv(self):
        out = {f"measured.{k}": v for k, v in self.measured.items()}
        for name, (ok, _) in self.checks.items():
            out[f"check.{name}"] = "pass" if ok else ("waived" if name in self.waived else "fail")
        return out


def audit_assumptions(rock, closures, tables=None, m0_floor=0.0, waive=(), n=20001):
    """Dense-sampling audit of (H1)-(H8) for the configured closures and fields."""
    from .global_pressure import build_tables
    cl = closures
    rep = AssumptionReport(waived=tuple(waive))
    s = np.linspace(0.0, 1.0, n)

    phi = np.asarray(rock.porosity, dtype=float)
    rep.measured["phi0"], rep.measured["phi1"] = float(phi.min()), float(phi.max())
    ok = phi.min() > 0 and phi.max() <= 1.0 and np.all(np.isfinite(phi))
    rep.checks["H1"] = (bool(ok), f"porosity in [{phi.min():.4g}, {phi.max():.4g}], need (0, 1]")

    K = np.asarray(rock.permeability, dtype=float)
    rep.measured["k0"], rep.measured["k_inf"] = float(K.min()), float(K.max())
    ok = K.min() > 0 and np.all(np.isfinite(K))
    rep.checks["H2"] = (bool(ok), f"permeability in [{K.min():.4g}, {K.max():.4g}]")

    Ml = cl.mobility(LIQUID, s)
    Mg = cl.mobility(GAS, s)
    m0 = float(np.min(Ml + Mg))
    rep.measured["m0"] = m0
    ok = (Ml[0] == 0 and Mg[-1] == 0 and Ml.min() >= 0 and Mg.min() >= 0 and m0 > max(m0_floor, 0.0))
    rep.checks["H3"] = (bool(ok), f"M_l(0)={Ml[0]:.3g}, M_g(s_g=0)={Mg[-1]:.3g}, m0={m0:.4g}")

    f = cl.fluid
    pmax = 2.0 * f.rho_max / f.C2
    pos = np.geomspace(1e-8 * pmax, pmax, 20000)
    p = np.concatenate([-pos[::-1], [0.0], pos])
    rho = cl.density(p)
    drho = np.diff(rho)
    rep.measured["rho_m"], rep.measured["rho_M"] = float(rho.min()), float(rho.max())
    ok = rho.min() > 0 and np.all(drho >= 0) and np.all(np.isfinite(rho))
    rep.checks["H4"] = (bool(ok), f"density in [{rho.min():.4g}, {rho.max():.4g}], "
                                  f"monotone={bool(np.all(drho >= 0))}")

    pcv = cl.capillary(s)
    dpc = cl.dcapillary(s)
    pc_lower = float(np.min(np.abs(dpc)))
    rep.measured["pc_lower"] = pc_lower
    ok = abs(pcv[-1]) <= 1e-12 * max(1.0, abs(pcv[0])) and pcv.min() >= 0 and np.all(dpc < 0) and pc_lower > 0
    rep.checks["H5"] = (bool(ok), f"pc(1)={pcv[-1]:.3g}, min|pc'|={pc_lower:.4g}")

    rmin = min(float(np.min(rock.r_g)), float(np.min(rock.r_w)))
    rep.checks["H6"] = (bool(rmin >= 0), f"min source {rmin:.4g}")

    D = cl.diffusion(s)
    rep.measured["d_star"] = float(D.min())
    ok = D.min() > 0 and np.all(np.isfinite(D))
    rep.checks["H7"] = (bool(ok), f"min diffusion {D.min():.4g}")

    try:
        tb = tables if tables is not None else build_tables(cl)
        tb_half = build_tables(cl, n=(tb.nodes.size + 1) // 2)
        gam = tb.gamma
        interior = gam[1:-1]
        lip = np.max(np.abs(np.diff(gam) / np.diff(tb.nodes)))
        lip_half = np.max(np.abs(np.diff(tb_half.gamma) / np.diff(tb_half.nodes)))
        c1_ok = lip <= 1.2 * lip_half
        theta, hconst = holder_exponent(tb)
        rep.measured["theta"] = theta
        rep.measured["holder_const"] = hconst
        ok = (abs(gam[0]) == 0 and abs(gam[-1]) == 0 and interior.min() > 0 and c1_ok
              and 0 < theta <= 1 and np.isfinite(hconst))
        rep.checks["H8"] = (bool(ok), f"gamma(0)={gam[0]:.3g}, gamma(1)={gam[-1]:.3g}, "
                                      f"min interior {interior.min():.3g}, C1-slope ratio "
                                      f"{lip / max(lip_half, 1e-300):.3f}, theta={theta:.3f}")
    except ValueError as exc:
        rep.checks["H8"] = (False, f"table construction failed: {exc}")
    return rep


def mass_balance(reports, initial):
    """Relative drift series (water, hydrogen) given initial contents.

    Drifts are scaled by the larger of the initial and the peak content, so
    that runs starting from an (almost) empty inventory stay meaningful.
    """
    w0, h0 = initial
    ws = max(abs(w0), max((abs(r.water) for r in reports), default=0.0), 1e-300)
    hs = max(abs(h0), max((abs(r.hydrogen) for r in reports), default=0.0), 1e-300)
    dw, dh = [], []
    cum_w = cum_h = 0.0
    for r in reports:
        cum_w += r.water_in
        cum_h += r.hydrogen_in
        dw.append((r.water - w0 - cum_w) / ws)
        dh.append((r.hydrogen - h0 - cum_h) / hs)
    return np.array(dw), np.array(dh)


TRACKED = ("diss_lg", "grad_p", "grad_pg", "grad_B", "eta_grad_pc")


def integrated_quantities(reports):
    """Time integrals of the quantities bounded uniformly in the limit passages."""
    hs = np.array([r.h for r in reports])
    def tot(name):
        return float(np.sum(hs * np.array([getattr(r, name) for r in reports])))
    return {"diss_lg": tot("diss_l") + tot("diss_g"), "grad_p": tot("grad_p"),
            "grad_pg": tot("grad_pg"), "grad_B": tot("grad_B"), "eta_grad_pc": tot("eta_grad_pc")}


def sweep_boundedness(series, factor=2.0):
    """Per-quantity verdict of uniform boundedness along a ladder.

    ``series`` maps quantity name -> values along the ladder, ordered
    towards the limit.  A series is bounded when max <= factor * median, or
    when it is non-increasing towards the limit (its first value is then a
    ladder-independent bound; this is the expected behaviour of the
    eta-weighted capillary gradient).
    """
    out = {}
    for name, vals in series.items():
        v = np.asarray(vals, dtype=float)
        if v.size < 3:
            raise ValueError("boundedness check needs at least 3 ladder points")
        med = float(np.median(np.abs(v)))
        mx = float(np.max(np.abs(v)))
        d = np.diff(v)
        trend = "flat" if np.all(d == 0) else ("increasing" if np.all(d >= 0) else
                                              ("decreasing" if np.all(d <= 0) else "mixed"))
        band = mx <= factor * med if med > 0 else mx == 0
        bounded = band or trend in ("flat", "decreasing")
        out[name] = {"bounded": bool(bounded), "max": mx, "median": med, "trend": trend,
                     "within_band": bool(band)}
    return out


def report_dict(rep):
    return asdict(rep)
