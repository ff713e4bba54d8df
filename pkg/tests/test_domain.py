import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from stap import (NaturalUnits, PhysicalParams, ScalarField, SpatialGrid, TimeGrid, WaveState, eval_ramp,
                  make_ramp)
from stap.invariants import hermite_gauss


def sympy_ramp(k):
    """Exact coefficients of the flat step from the boundary linear system."""
    s = sp.symbols("s")
    c = sp.symbols(f"c0:{2 * k + 2}")
    P = sum(ci * s**i for i, ci in enumerate(c))
    eqs = [P.subs(s, 0), P.subs(s, 1) - 1]
    for d in range(1, k + 1):
        eqs += [sp.diff(P, s, d).subs(s, 0), sp.diff(P, s, d).subs(s, 1)]
    sol = sp.solve(eqs, c)
    return [float(sol[ci]) for ci in c]


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_ramp_matches_exact_linear_solve(k):
    ramp = make_ramp(2 * k + 1, k)
    np.testing.assert_allclose(ramp.coefficients, sympy_ramp(k), atol=1e-12)


def test_known_ramps():
    assert make_ramp(7, 3).coefficients == (0, 0, 0, 0, 35, -84, 70, -20)
    assert make_ramp(3, 1).coefficients == (0, 0, 3, -2)
    assert make_ramp(7, 3)(0.5) == pytest.approx(0.5, abs=1e-15)


@given(st.integers(min_value=0, max_value=6))
def test_ramp_boundary_flatness(k):
    ramp = make_ramp(2 * k + 1, k)
    assert abs(ramp(0.0)) < 1e-12 and abs(ramp(1.0) - 1.0) < 1e-12
    for d in range(1, k + 1):
        assert abs(ramp(0.0, d)) < 1e-12
        assert abs(ramp(1.0, d)) < 1e-12 * max(1.0, abs(ramp(0.5, d)))


def test_degree_seven_ramp_is_monotone():
    s = np.linspace(0, 1, 10001)
    assert np.all(np.diff(make_ramp(7, 3)(s)) >= 0)


@pytest.mark.parametrize("degree,k", [(6, 3), (7, 2), (4, 1)])
def test_ramp_rejects_bad_degree(degree, k):
    with pytest.raises(ValueError):
        make_ramp(degree, k)


def test_eval_ramp_examples_and_chain_rule():
    P, tf = make_ramp(7, 3), 2.5
    assert eval_ramp(P, 0.0, tf, 1) == 0.0
    assert abs(eval_ramp(P, tf, tf, 3)) < 1e-12
    assert eval_ramp(P, tf / 2, tf, 0) == pytest.approx(0.5)
    t, h = 0.7, 1e-5
    fd = (eval_ramp(P, t + h, tf) - eval_ramp(P, t - h, tf)) / (2 * h)
    assert eval_ramp(P, t, tf, 1) == pytest.approx(fd, rel=1e-8)
    assert eval_ramp(P, t, tf, 2) == pytest.approx(P(t / tf, 2) / tf**2)


@pytest.mark.parametrize("t", [-0.1, 2.6])
def test_eval_ramp_out_of_range(t):
    with pytest.raises(ValueError):
        eval_ramp(make_ramp(), t, 2.5)


def test_grids():
    g = SpatialGrid(-3.0, 5.0, 64)
    assert g.dx == pytest.approx(8 / 63)
    np.testing.assert_allclose(np.diff(g.x), g.dx, rtol=1e-12)
    for bad in (8, 100, 0):
        with pytest.raises(ValueError):
            SpatialGrid(-1.0, 1.0, bad)
    with pytest.raises(ValueError):
        SpatialGrid(1.0, -1.0, 32)
    tg = TimeGrid(2.0, 8)
    assert tg.dt == 0.25 and len(tg) == 9 and tg.times[-1] == 2.0
    assert TimeGrid.with_samples(1.0, 400).n_steps == 399


def test_params_validation():
    with pytest.raises(ValueError):
        PhysicalParams(mass=-1.0)
    with pytest.raises(ValueError):
        PhysicalParams(hbar=0.0)
    assert PhysicalParams(g=-0.3).g == -0.3
    assert PhysicalParams.natural().kinetic == 0.5


def test_natural_units_for_reference_trap():
    u = NaturalUnits(1.44e-25, 2 * np.pi * 125.0)
    assert u.length == pytest.approx(9.655e-7, rel=1e-3)
    assert 3e-6 / u.length == pytest.approx(3.107, rel=1e-3)
    assert 0.08 / u.time == pytest.approx(62.83, rel=1e-3)
    assert u.energy == pytest.approx(1.0546e-34 * 2 * np.pi * 125, rel=1e-3)


def test_scalar_field_is_immutable():
    g = SpatialGrid.symmetric(5.0, 32)
    f = ScalarField(g, np.ones(32))
    with pytest.raises(ValueError):
        f.values[0] = 2.0
    with pytest.raises(ValueError):
        ScalarField(g, np.ones(31))


def test_analytic_derivatives_converge_at_second_order():
    """Side-channel derivatives vs centred differences: error ratio ~4 per halving."""
    errs = []
    for n in (64, 128, 256):
        g = SpatialGrid.symmetric(8.0, n)
        s = hermite_gauss(2, g.x, 1.3)
        f = ScalarField(g, s.value, s.d1, s.d2)
        cd1 = (f.values[2:] - f.values[:-2]) / (2 * g.dx)
        cd2 = (f.values[2:] - 2 * f.values[1:-1] + f.values[:-2]) / g.dx**2
        errs.append((np.max(np.abs(cd1 - f.d1[1:-1])), np.max(np.abs(cd2 - f.d2[1:-1]))))
    errs = np.array(errs)
    ratios = errs[:-1] / errs[1:]
    assert np.all((ratios > 3.5) & (ratios < 4.5))


def test_wavestate_norm():
    g = SpatialGrid.symmetric(10.0, 256)
    w = WaveState(g, 3.0 * hermite_gauss(0, g.x).value).normalized()
    assert w.norm() == pytest.approx(1.0, abs=1e-14)
    assert w.at_time(2.0).t == 2.0
