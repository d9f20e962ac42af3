"""Face-flux assembly kernels.

The numba path is used when numba imports and ``H2FLOW_DISABLE_NUMBA`` is
unset (or "0"); otherwise the vectorised numpy path runs.  Both return the
same quantities and are compared in the test-suite and ``benchmarks/``.
"""
from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit
    HAS_NUMBA = True
except ImportError:  # pragma: no cover
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and os.environ.get("H2FLOW_DISABLE_NUMBA", "0") in ("", "0")


def face_fluxes_numpy(c0, c1, T, G, gdz, p_g, p_l, pu_g, pu_l, Ml, Mg, rho_h, Xw, D,
                      rho_lph, rho_gph, eps, eta, C1, C2, n_real, centered=False):
    """Outward hydrogen/water fluxes per face and their per-cell sums.

    Arrays indexed by cell cover ``n_real`` cells followed by Dirichlet
    ghost cells.  Mobilities and ``rho_h`` are taken upstream of the phase
    potential built from ``pu_*`` (arithmetic face means when ``centered``);
    everything else is face-averaged.
    """
    rl = 0.5 * (rho_lph[c0] + rho_lph[c1])
    rg = 0.5 * (rho_gph[c0] + rho_gph[c1])
    up_l = (pu_l[c0] - pu_l[c1] + rl * gdz) >= 0.0
    up_g = (pu_g[c0] - pu_g[c1] + rg * gdz) >= 0.0
    if centered:
        ml = 0.5 * (Ml[c0] + Ml[c1])
        mg = 0.5 * (Mg[c0] + Mg[c1])
        rhl = rhg = 0.5 * (rho_h[c0] + rho_h[c1])
    else:
        ul = np.where(up_l, c0, c1)
        ug = np.where(up_g, c0, c1)
        ml, mg, rhl, rhg = Ml[ul], Mg[ug], rho_h[ul], rho_h[ug]
    Fl = T * ((ml + eps) * (p_l[c0] - p_l[c1]) + ml * rl * gdz)
    Fg = T * ((mg + eps) * (p_g[c0] - p_g[c1]) + mg * rg * gdz)
    henry = C2 * 0.5 * (Xw[c0] + Xw[c1]) * 0.5 * (D[c0] + D[c1]) * G * (p_g[c0] - p_g[c1])
    dpc = (p_g[c0] - p_l[c0]) - (p_g[c1] - p_l[c1])
    eta_h = (C1 - 1.0) * eta * 0.5 * (rho_h[c0] + rho_h[c1]) * G * dpc
    eta_w = -eta * G * dpc
    fh = rhl * Fl + C1 * rhg * Fg + henry + eta_h
    fw = Fl + eta_w
    real1 = c1 < n_real
    acc_h = (np.bincount(c0, weights=fh, minlength=n_real)
             - np.bincount(c1[real1], weights=fh[real1], minlength=n_real))
    acc_w = (np.bincount(c0, weights=fw, minlength=n_real)
             - np.bincount(c1[real1], weights=fw[real1], minlength=n_real))
    return acc_h[:n_real], acc_w[:n_real], fh, fw


if HAS_NUMBA:
    @njit(cache=True)
    def face_fluxes_numba(c0, c1, T, G, gdz, p_g, p_l, pu_g, pu_l, Ml, Mg, rho_h, Xw, D,
                          rho_lph, rho_gph, eps, eta, C1, C2, n_real, centered=False):
        nf = c0.size
        acc_h = np.zeros(n_real)
        acc_w = np.zeros(n_real)
        fh = np.empty(nf)
        fw = np.empty(nf)
        for f in range(nf):
            i = c0[f]
            j = c1[f]
            rl = 0.5 * (rho_lph[i] + rho_lph[j])
            rg = 0.5 * (rho_gph[i] + rho_gph[j])
            if centered:
                ml = 0.5 * (Ml[i] + Ml[j])
                mg = 0.5 * (Mg[i] + Mg[j])
                rhl = 0.5 * (rho_h[i] + rho_h[j])
                rhg = rhl
            else:
                ul = i if pu_l[i] - pu_l[j] + rl * gdz[f] >= 0.0 else j
                ug = i if pu_g[i] - pu_g[j] + rg * gdz[f] >= 0.0 else j
                ml = Ml[ul]
                mg = Mg[ug]
                rhl = rho_h[ul]
                rhg = rho_h[ug]
            Fl = T[f] * ((ml + eps) * (p_l[i] - p_l[j]) + ml * rl * gdz[f])
            Fg = T[f] * ((mg + eps) * (p_g[i] - p_g[j]) + mg * rg * gdz[f])
            henry = C2 * 0.5 * (Xw[i] + Xw[j]) * 0.5 * (D[i] + D[j]) * G[f] * (p_g[i] - p_g[j])
            dpc = (p_g[i] - p_l[i]) - (p_g[j] - p_l[j])
            eta_h = (C1 - 1.0) * eta * 0.5 * (rho_h[i] + rho_h[j]) * G[f] * dpc
            a = rhl * Fl + C1 * rhg * Fg + henry + eta_h
            b = Fl - eta * G[f] * dpc
            fh[f] = a
            fw[f] = b
            acc_h[i] += a
            acc_w[i] += b
            if j < n_real:
                acc_h[j] -= a
                acc_w[j] -= b
        return acc_h, acc_w, fh, fw
else:  # pragma: no cover
    face_fluxes_numba = None


def face_fluxes(*args):
    if USE_NUMBA:
        return face_fluxes_numba(*args)
    return face_fluxes_numpy(*args)
