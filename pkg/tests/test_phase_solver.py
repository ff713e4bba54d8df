import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stap import (AmbiguousGaugeWarning, ExpansionScenario, FFSchedule, FieldSample, IllConditionedPhaseError,
                  PhysicalParams, ScalarField, SpatialGrid, TimeGrid, assemble_ff_phase, build_split_amplitude,
                  imag_residual_slice, make_ramp, solve_phase_movie, solve_phase_slice, solve_theta)
from stap.domain import RampedFunction
from stap.invariants import hermite_gauss
from stap._numerics import lagrange_at
from stap.phase_solver import resolve_anchor, theta_rate

P = PhysicalParams.natural()
GRID = SpatialGrid.symmetric(20.0, 1024)


def breathing_gaussian(R, Rdot, grid=GRID, params=P, n=0):
    """Hermite-Gauss mode with beta^2 = m R / hbar and rate d/dt for R-dot."""
    beta = np.sqrt(params.mass * R / params.hbar)
    dbeta = beta / (2 * R) * Rdot

    def sampler(x):
        s = hermite_gauss(n, x, beta)
        return FieldSample(s.value, s.d1, s.d2, s.rate * dbeta)

    return ScalarField.from_sampler(grid, sampler)


def on_mask(field, values):
    return values[field.mask]


def test_static_amplitude_gives_zero_phase():
    r = breathing_gaussian(1.0, 0.0)
    phi = solve_phase_slice(r, P)
    assert np.max(np.abs(phi.values)) == 0.0


@given(st.floats(0.2, 3.0), st.floats(-2.0, 2.0))
@settings(max_examples=25, deadline=None)
def test_breathing_gaussian_phase_is_quadratic(R, Rdot):
    r = breathing_gaussian(R, Rdot)
    phi = solve_phase_slice(r, P)
    exact = -(Rdot / R) * P.mass * GRID.x**2 / (4 * P.hbar)
    diff = on_mask(phi, phi.values - exact)
    assert np.ptp(diff) < 1e-9 * max(1.0, np.max(np.abs(on_mask(phi, exact))))
    assert abs(phi.values[np.argmin(np.abs(GRID.x))] - exact[np.argmin(np.abs(GRID.x))]) < 1e-12


@given(st.floats(0.3, 3.0), st.floats(-2.0, 2.0))
@settings(max_examples=25, deadline=None)
def test_reality_residual_below_certificate(R, Rdot):
    r = breathing_gaussian(R, Rdot)
    phi = solve_phase_slice(r, P)
    res = imag_residual_slice(r, phi, P)
    assert np.max(np.abs(res.values[res.mask])) < 1e-8


def test_si_units_phase():
    """Same physics in SI: phi depends on m/hbar."""
    p = PhysicalParams(mass=1.44e-25, hbar=1.054571817e-34, units="si")
    x0 = np.sqrt(p.hbar / (p.mass * 785.0))
    grid = SpatialGrid.symmetric(20 * x0, 512)
    r = breathing_gaussian(785.0, 100.0, grid, p)
    phi = solve_phase_slice(r, p)
    exact = -(100.0 / 785.0) * p.mass * grid.x**2 / (4 * p.hbar)
    assert np.ptp(on_mask(phi, phi.values - exact)) < 1e-8


def test_splitting_phase_is_even_and_anchored(split80):
    r = build_split_amplitude(split80, split80.t_f / 2)
    phi = solve_phase_slice(r, split80.params, anchor_x=0.0)
    v = phi.values
    assert np.max(np.abs(v - v[::-1])) < 1e-9
    # x = 0 falls between grid points; interpolate both conditions there
    assert abs(lagrange_at(0.0, r.grid.x, v)) < 1e-12
    assert abs(lagrange_at(0.0, r.grid.x, phi.d1)) < 1e-10


def test_theta_gaussian():
    R = 0.7
    th = solve_theta(breathing_gaussian(R, 1.0), P)
    exact = -P.mass * GRID.x**2 / (4 * P.hbar * R)
    assert np.ptp(on_mask(th, th.values - exact)) < 1e-9


def test_theta_with_static_family_is_zero():
    assert np.all(solve_theta(breathing_gaussian(1.2, 0.0), P).values == 0.0)


# grid with a point on x = 0, so the node of an odd mode is resolved and masked
NODE_GRID = SpatialGrid(-20.0, 20.0 + 40.0 / 1022, 1024)


def test_theta_odd_mode_needs_explicit_gap_permission():
    r = breathing_gaussian(1.0, 1.0, NODE_GRID, n=1)
    with pytest.raises(IllConditionedPhaseError) as info:
        solve_theta(r, P)
    lo, hi = info.value.interval
    assert lo <= 0.0 <= hi


@pytest.mark.parametrize("grid", [GRID, NODE_GRID], ids=["node-between-points", "node-on-grid"])
def test_theta_odd_mode_matches_gaussian_form(grid):
    R = 1.3
    r = breathing_gaussian(R, 1.0, grid, n=1)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        th = solve_theta(r, P, allow_nodal_gaps=True)
    gapped = any(issubclass(w.category, AmbiguousGaugeWarning) for w in caught)
    assert gapped == (grid is NODE_GRID)
    x = grid.x
    exact = -P.mass * x**2 / (4 * P.hbar * R)
    m = th.mask
    assert np.ptp(th.values[m] - exact[m]) < 1e-9
    assert resolve_anchor(r, 0.0) != 0.0
    # theta equation with the analytic form: r th'' + 2 r' th' + (2m/hbar) dr/dR = 0
    res = r.values * (-P.mass / (2 * R)) + 2 * r.d1 * (-P.mass * x / (2 * R)) + 2 * P.mass * r.rate
    assert np.max(np.abs(res)) < 1e-9


def test_phase_fails_when_density_vanishes_everywhere():
    zero = ScalarField(GRID, np.zeros(GRID.n_points), rate=np.zeros(GRID.n_points))
    with pytest.raises(IllConditionedPhaseError):
        solve_phase_slice(zero, P)


def test_phase_needs_rate():
    with pytest.raises(ValueError):
        solve_phase_slice(ScalarField(GRID, np.ones(GRID.n_points)), P)


def test_theta_rate_matches_analytic():
    sc = ExpansionScenario()
    th = sc.theta_family()
    R = 0.4
    d = theta_rate(th, R)
    m = np.isfinite(d) & th(R).mask
    exact = P.mass * sc.grid.x**2 / (4 * P.hbar * R**2)
    assert np.max(np.abs(d[m] - exact[m])) < 1e-7 * np.max(exact[m])


# --- schedules ---------------------------------------------------------------

def schedule(eps=1.0):
    ramp = make_ramp(7, 3)
    return FFSchedule(RampedFunction(1.0, 0.25, ramp, 3.0), TimeGrid(3.0, 60), eps)


def test_schedule_invariants():
    s = schedule(0.37)
    t = s.times
    lam = s.Lambda()
    np.testing.assert_allclose(s.R(t), s.R(0.0) + s.epsilon * lam, rtol=1e-10, atol=0)
    assert s.boundary_violation() < 1e-14
    rising = FFSchedule(RampedFunction(0.2, 2.0, make_ramp(5, 2), 1.0), TimeGrid(1.0, 50))
    assert np.all(rising.alpha(rising.times) >= 0)
    with pytest.raises(ValueError):
        FFSchedule(RampedFunction(0, 1, make_ramp(), 1.0), TimeGrid(1.0, 10), 0.0)


def test_epsilon_invariance():
    sc = ExpansionScenario(n_slices=21)
    th = sc.theta_family()
    base = sc.schedule()

    def energy(R):
        return 0.5 * R

    a = assemble_ff_phase(th, base, energy, P)
    b = assemble_ff_phase(th, base.rescaled(3.0), energy, P)
    np.testing.assert_allclose(a.values, b.values, rtol=0, atol=1e-12)
    np.testing.assert_allclose(a.rate, b.rate, rtol=0, atol=1e-12)


def test_ff_phase_boundaries():
    sc = ExpansionScenario(n_slices=21)
    ph = assemble_ff_phase(sc.theta_family(), sc.schedule(), lambda R: 0.5 * R, P)
    assert np.max(np.abs(ph.values[0])) == 0.0
    np.testing.assert_allclose(ph.rate[0], -0.5, atol=1e-14)
    assert max(ph.boundary_spread()) < 1e-9
    e0, ef = ph.boundary_energies()
    assert e0 == pytest.approx(0.5) and ef == pytest.approx(0.05)


def test_constant_energy_free_rotation():
    s = FFSchedule(RampedFunction(1.0, 1.0, make_ramp(5, 2), 2.0), TimeGrid(2.0, 20))
    th = lambda R: solve_theta(breathing_gaussian(R, 0.0), P)
    ph = assemble_ff_phase(th, s, lambda R: 1.7, P)
    expected = -1.7 * s.times / P.hbar
    np.testing.assert_allclose(ph.values, np.repeat(expected[:, None], GRID.n_points, 1), atol=1e-12)


def test_gauge_freedom_leaves_residual_unchanged():
    r = breathing_gaussian(1.1, 0.6)
    phi = solve_phase_slice(r, P)
    shifted = phi.replace(values=phi.values + 4.2)
    a = imag_residual_slice(r, phi, P).values
    b = imag_residual_slice(r, shifted, P).values
    np.testing.assert_array_equal(a, b)


def test_phase_movie_rate_modes():
    """Sub-slice rate vs slice differences vs the closed form for a breathing Gaussian."""
    ramp = make_ramp(7, 3)
    R = RampedFunction(1.0, 0.3, ramp, 4.0)
    times = np.linspace(0, 4.0, 41)

    def r_at(t):
        return breathing_gaussian(float(R(t)), float(R(t, 1)))

    fine = solve_phase_movie(r_at, times, P, rate_step=times[1] / 16)
    coarse = solve_phase_movie(r_at, times, P)
    # phi = -(R'/R) x^2/4, so phi-dot = -(R''/R - R'^2/R^2) x^2/4
    x2 = GRID.x**2 / 4
    errs = []
    for ph in (fine, coarse):
        worst = 0.0
        for i, t in enumerate(times):
            Rt, Rd, Rdd = R(t), R(t, 1), R(t, 2)
            exact = -(Rdd / Rt - Rd**2 / Rt**2) * x2
            m = ph.slices[i].mask & (np.abs(GRID.x) < 6)
            worst = max(worst, np.max(np.abs(ph.rate[i][m] - exact[m])))
        errs.append(worst)
    assert errs[0] < 1e-7
    assert errs[0] < errs[1] / 100
