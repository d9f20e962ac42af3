import numpy as np
import pytest

from h2flow.closures import ClosureSet, FluidParams, HenryDensity, default_closures, linear_pc, power_kr
from h2flow.config import parse_config
from h2flow.cli import resolve_config
from h2flow.grid import RockField, build_grid


def nondim_fluid(**kw):
    base = dict(mu_l=1.0, mu_g=1.0, M_h=1.0, R=1.0, T=1 / 52.51, rho_l_w=1.0,
                rho_min=1e-3, rho_max=10.0)
    base.update(kw)
    return FluidParams(**base)


def closure_variant(**over):
    """The nondimensional closure set with some pieces replaced."""
    pc, dpc, pinv = linear_pc(1.0)
    parts = dict(kr_l=power_kr(2), kr_g=power_kr(2), pc=pc, dpc=dpc, pc_inv=pinv,
                 D_lh=lambda s: np.full(np.shape(s), 0.01), fluid=nondim_fluid(), P_e=1.0)
    parts.update(over)
    return ClosureSet(**parts)


def uniform_rock(n=4, **kw):
    g = build_grid([1.0], [n])
    base = dict(porosity=0.3, permeability=1.0)
    base.update(kw)
    return RockField.uniform(g, **base)


class _DecreasingDensity(HenryDensity):
    def __call__(self, p):
        return 2.0 - 0.5 * np.tanh(np.asarray(p, dtype=float))


def _flat_pc():
    # pc' vanishes at s = 0.5
    def pc(s):
        return 1.0 - 0.5 * (1 + (2 * np.asarray(s) - 1) ** 3)

    def dpc(s):
        return -3.0 * (2 * np.asarray(s) - 1) ** 2

    def pinv(p):
        return np.clip(0.5 * (1 + np.cbrt(1 - 2 * np.asarray(p))), 0, 1)
    return dict(pc=pc, dpc=dpc, pc_inv=pinv)


def constructed_violations():
    """Hypothesis name -> (rock, closures) breaking that hypothesis (H3 also breaks H8)."""
    ok = closure_variant()
    return {
        "H1": (uniform_rock(porosity=1.5), ok),
        "H2": (uniform_rock(permeability=0.0), ok),
        "H3": (uniform_rock(), closure_variant(kr_l=lambda s: 0.1 + 0.9 * np.asarray(s) ** 2)),
        "H4": (uniform_rock(), closure_variant(density=_DecreasingDensity(1.0, 1e-3, 10.0))),
        "H5": (uniform_rock(), closure_variant(**_flat_pc())),
        "H6": (uniform_rock(r_g=-1.0), ok),
        "H7": (uniform_rock(), closure_variant(D_lh=lambda s: np.zeros(np.shape(s)))),
        "H8": (uniform_rock(),
               closure_variant(kr_g=lambda s: np.maximum(np.asarray(s) - 0.2, 0.0) ** 2)),
    }


@pytest.fixture(scope="session")
def closures():
    """Closures with the default physical constants."""
    return default_closures()


@pytest.fixture(scope="session")
def nd_closures():
    """Closures of the shipped nondimensional cases."""
    return default_closures(nondim_fluid(), P_e=1.0, d_star=0.01)


@pytest.fixture(scope="session")
def tables(closures):
    from h2flow.global_pressure import build_tables
    return build_tables(closures)


@pytest.fixture(scope="session")
def nd_tables(nd_closures):
    from h2flow.global_pressure import build_tables
    return build_tables(nd_closures)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def injection_cfg():
    return parse_config(resolve_config("injection_1d"))


@pytest.fixture
def closed_cfg():
    return parse_config(resolve_config("closed_1d"))
