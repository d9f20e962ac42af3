"""Face-flux kernel timing: numba against the pure-numpy fallback.

    python3 benchmarks/bench_kernels.py --cells 200 200 --repeat 20
"""
import argparse
import time

import numpy as np

from h2flow import _kernels
from h2flow.closures import FluidParams, default_closures
from h2flow.discretization import RegParams, derive_secondary, Problem
from h2flow.grid import RockField, build_grid


def setup(cells, seed):
    rng = np.random.default_rng(seed)
    fl = FluidParams(mu_l=1.0, mu_g=1.0, M_h=1.0, R=1.0, T=1 / 52.51, rho_l_w=1.0,
                     rho_min=1e-3, rho_max=10.0)
    cl = default_closures(fl, P_e=1.0, d_star=0.01)
    lengths = [1.0] * len(cells)
    g = build_grid(lengths, cells, "left=dirichlet, rest=noflux")
    prob = Problem(g, RockField.uniform(g, permeability=1.0), cl)
    n = g.n_cells
    p_g = 1.0 + rng.random(n)
    p_l = p_g - rng.random(n)
    pg, pl = prob.extend(p_g, p_l)
    sec = derive_secondary(pg, pl, cl)
    reg = RegParams(1e-4, 1e-3, 0.01)
    return (prob.c0, prob.c1, prob.T, prob.G, prob.gdz, pg, pl, pg, pl, sec.M_l, sec.M_g,
            sec.rho_h, sec.X_w, sec.D, sec.rho_lph, sec.rho_gph, reg.eps, reg.eta,
            fl.C1, fl.C2, n, False)


def best_of(fn, args, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--cells", type=int, nargs="+", default=[200, 200])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    a = ap.parse_args()
    args = setup(a.cells, a.seed)
    ref = _kernels.face_fluxes_numpy(*args)
    t_np = best_of(_kernels.face_fluxes_numpy, args, a.repeat)
    print(f"cells={a.cells} faces={args[0].size}")
    print(f"numpy : {t_np * 1e3:9.3f} ms")
    if not _kernels.HAS_NUMBA:
        print("numba : not installed")
        return
    t0 = time.perf_counter()
    out = _kernels.face_fluxes_numba(*args)
    print(f"numba first call (incl. compile/cache load): {(time.perf_counter() - t0) * 1e3:.1f} ms")
    err = max(float(np.max(np.abs(x - y))) for x, y in zip(out, ref))
    t_nb = best_of(_kernels.face_fluxes_numba, args, a.repeat)
    print(f"numba : {t_nb * 1e3:9.3f} ms   speedup x{t_np / t_nb:.2f}   max |diff| {err:.2e}")


if __name__ == "__main__":
    main()
