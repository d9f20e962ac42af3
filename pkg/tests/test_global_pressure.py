import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from h2flow.closures import GAS, LIQUID, ClosureSet, default_closures, linear_pc, power_kr
from h2flow.diagnostics import fundamental_equality, holder_exponent
from h2flow.global_pressure import build_tables, energy_functions

from conftest import nondim_fluid

# hypothesis tests cannot take function-scoped fixtures
_ND = default_closures(nondim_fluid(), P_e=1.0, d_star=0.01)
_ND_TABLES = build_tables(_ND)


def _gamma_exact(cl, s):
    Ml, Mg = cl.mobility(LIQUID, s), cl.mobility(GAS, s)
    return -Ml * Mg / (Ml + Mg) * cl.dcapillary(s)


def test_pressures_differ_by_pc(tables, closures, rng):
    s = rng.uniform(0, 1, 1000)
    diff = tables.eval_p_bar(s) - tables.eval_p_tilde(s)
    assert np.max(np.abs(diff - closures.capillary(s))) <= 1e-8 * closures.P_e


def test_global_pressure_same_from_both_phases(tables, closures, rng):
    s = rng.uniform(0, 1, 200)
    p_g = rng.uniform(-1, 3, 200) * closures.P_e
    p_l = p_g - closures.capillary(s)
    a = tables.global_p(p_g, s)
    b = tables.global_p_from_liquid(p_l, s)
    assert np.allclose(a, b, rtol=0, atol=1e-8 * closures.P_e)


def test_tables_anchored_at_full_saturation(tables):
    assert tables.eval_p_tilde(1.0) == pytest.approx(0.0, abs=1e-12)
    assert tables.eval_p_bar(1.0) == pytest.approx(0.0, abs=1e-12)
    assert tables.eval_B(0.0) == pytest.approx(0.0, abs=1e-12)


def test_B_total_matches_quadrature(closures, tables):
    ref = integrate.quad(lambda z: float(_gamma_exact(closures, z)), 0, 1, epsabs=0, epsrel=1e-12)[0]
    assert tables.B_total == pytest.approx(ref, rel=1e-10)


def test_B_inverse_roundtrip(tables, rng):
    s = rng.uniform(0, 1, 500)
    back = tables.B_inverse(tables.eval_B(s))
    assert np.max(np.abs(back - s)) < 1e-9


def test_B_inverse_rejects_out_of_range(tables):
    with pytest.raises(ValueError):
        tables.B_inverse(np.array([-0.1 * tables.B_total]))
    with pytest.raises(ValueError):
        tables.B_inverse(np.array([1.1 * tables.B_total]))


def test_gamma_degenerate_at_ends_and_positive_inside(tables):
    g = tables.gamma
    assert g[0] == 0.0 and g[-1] == 0.0
    assert np.all(g[1:-1] > 0)


def test_tables_reject_too_few_nodes(closures):
    with pytest.raises(ValueError):
        build_tables(closures, n=10)


def test_dump_csv(tmp_path, nd_tables):
    path = tmp_path / "t.csv"
    nd_tables.dump_csv(path, header="# test")
    lines = path.read_text().splitlines()
    assert lines[0] == "# test"
    assert lines[1] == "s,p_tilde,p_bar,gamma,B"
    assert len(lines) == 2 + nd_tables.nodes.size


def test_chain_rule_of_global_pressure(nd_tables, nd_closures):
    # d/dx p(p_g(x), s(x)) = p_g' - (Ml/M) pc'(s) s'
    cl = nd_closures
    x = np.linspace(0.1, 0.9, 41)
    d = 1e-5
    s = lambda y: 0.5 + 0.3 * np.sin(2 * y)  # noqa: E731
    pg = lambda y: 1.0 + y ** 2  # noqa: E731
    p = lambda y: nd_tables.global_p(pg(y), s(y))  # noqa: E731
    num = (p(x + d) - p(x - d)) / (2 * d)
    sx = s(x)
    Ml, Mg = cl.mobility(LIQUID, sx), cl.mobility(GAS, sx)
    exact = 2 * x - Ml / (Ml + Mg) * cl.dcapillary(sx) * 0.6 * np.cos(2 * x)
    assert np.max(np.abs(num - exact)) < 1e-6


def test_fundamental_equality_smooth_field(nd_tables, nd_closures):
    x = np.linspace(0, 1, 801)
    s = 0.5 + 0.4 * np.cos(3 * x)
    p_g = 1.0 + 0.7 * np.sin(2 * x)
    assert fundamental_equality(nd_tables, nd_closures, s, p_g, x[1] - x[0]) < 1e-6


def test_holder_exponent_in_range(nd_tables):
    theta, const = holder_exponent(nd_tables)
    assert 0 < theta <= 1
    assert np.isfinite(const)


# energy functions ------------------------------------------------------

@pytest.fixture(scope="module")
def efuns_nd(nd_closures):
    return energy_functions(nd_closures)


def test_H_g_vanishes_at_zero(efuns_nd):
    assert efuns_nd.H_g(np.array([0.0]))[0] == pytest.approx(0.0, abs=1e-15)


def test_H_g_nonnegative(efuns_nd, nd_closures):
    f = nd_closures.fluid
    p = np.linspace(-2 * f.rho_max / f.C2, 3 * f.rho_max / f.C2, 10 ** 4)
    H = efuns_nd.H_g(p)
    assert np.all(H >= -1e-12)


def test_g_g_matches_quadrature(efuns_nd, nd_closures):
    dens = nd_closures.density
    for p in (-1.0, 1e-3, 0.5, 5.0, 12.0):
        ref = integrate.quad(lambda z: 1.0 / float(dens(z)), 0.0, p, epsabs=0, epsrel=1e-12,
                             points=[dens.a1, dens.a2, dens.b1, dens.b2] if p > 0 else None,
                             limit=200)[0]
        assert efuns_nd.g_g(p) == pytest.approx(ref, rel=1e-9)


def test_dH_g_matches_finite_difference(efuns_nd, nd_closures):
    dens = nd_closures.density
    # points away from the density knees
    p = np.concatenate([np.linspace(-2, 0.5 * dens.a1, 20),
                        np.linspace(2 * dens.a2, 0.9 * dens.b1, 20),
                        np.linspace(1.1 * dens.b2, 20, 20)])
    d = 1e-6 * np.maximum(1.0, np.abs(p))
    fd = (efuns_nd.H_g(p + d) - efuns_nd.H_g(p - d)) / (2 * d)
    assert np.allclose(fd, efuns_nd.dH_g(p), rtol=1e-6, atol=1e-8)


class _ConstantDensity:
    def __init__(self, rho):
        self.rho = rho

    def __call__(self, p):
        return np.full(np.shape(p), self.rho)

    def derivative(self, p):
        return np.zeros(np.shape(p))


def test_constant_density_gives_zero_H_g():
    pc, dpc, pinv = linear_pc(1.0)
    cl = ClosureSet(kr_l=power_kr(2), kr_g=power_kr(2), pc=pc, dpc=dpc, pc_inv=pinv,
                    D_lh=lambda s: np.full(np.shape(s), 0.01), fluid=nondim_fluid(),
                    density=_ConstantDensity(2.0))
    ef = energy_functions(cl)
    p = np.array([-1.0, 0.0, 0.3, 4.0])
    assert np.allclose(ef.g_g(p), p / 2.0, rtol=1e-12)
    assert np.allclose(ef.H_g(p), 0.0, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_B_strictly_increasing(a, b):
    tb = _ND_TABLES
    if abs(a - b) < 1e-9:
        return
    lo, hi = min(a, b), max(a, b)
    assert tb.eval_B(hi) > tb.eval_B(lo)


@settings(max_examples=50, deadline=None)
@given(st.floats(-5.0, 20.0))
def test_H_g_nonnegative_property(p):
    assert energy_functions(_ND).H_g(np.array([p]))[0] >= -1e-12


def test_exponential_law_tables():
    cl = default_closures(nondim_fluid(), P_e=1.0, d_star=0.01, pc_law="exponential")
    tb = build_tables(cl)
    s = np.linspace(0, 1, 101)
    assert np.max(np.abs(tb.eval_p_bar(s) - tb.eval_p_tilde(s) - cl.capillary(s))) < 1e-8
