import numpy as np
import pytest

from stap import (ExpansionScenario, FieldSample, PhysicalParams, PotentialMovie, ScalarField, SpatialGrid,
                  ff_potential_slice, imag_residual_slice, imaginary_time_ground_state, real_potential_slice,
                  solve_phase_slice, standard_energy, standard_potential)
from stap._numerics import spectral_derivative
from stap.invariants import hermite_gauss, invariant_route_potential

P = PhysicalParams.natural()
GRID = SpatialGrid.symmetric(16.0, 512)
X = GRID.x


def hg_field(n, beta=1.0, rate=None, grid=GRID):
    s = hermite_gauss(n, grid.x, beta)
    return ScalarField(grid, s.value, s.d1, s.d2, rate=rate, provenance="analytic")


def shrinking_gaussian(beta=1.0, beta_dot=0.3):
    def sampler(x):
        s = hermite_gauss(0, x, beta)
        return FieldSample(s.value, s.d1, s.d2, s.rate * beta_dot)
    return ScalarField.from_sampler(GRID, sampler)


def test_harmonic_ground_state_inverts_to_trap():
    w = 1.7
    r = hg_field(0, np.sqrt(w)).replace(mask=None)
    phi = ScalarField(GRID, np.zeros_like(X), d1=np.zeros_like(X), rate=np.full_like(X, -w / 2))
    V = real_potential_slice(r, phi, P, clamp=False)
    a = np.abs(r.values) > 1e-8 * r.values.max()
    np.testing.assert_allclose(V.values[a], 0.5 * w**2 * X[a] ** 2, atol=1e-10)


def test_real_potential_requires_rate():
    r = hg_field(0)
    with pytest.raises(ValueError):
        real_potential_slice(r, ScalarField(GRID, np.zeros_like(X)), P)


def test_masked_points_are_clamped_or_nan():
    r = shrinking_gaussian()
    phi = solve_phase_slice(r, P)
    phi = phi.replace(rate=np.zeros_like(X))
    m = phi.mask
    clamped = real_potential_slice(r.replace(mask=m), phi, P)
    raw = real_potential_slice(r.replace(mask=m), phi, P, clamp=False)
    assert np.all(np.isnan(raw.values[~m])) and np.all(np.isfinite(clamped.values))
    edge = np.flatnonzero(m)[-1]
    assert np.all(clamped.values[edge:] == clamped.values[edge])


def test_imag_residual_examples():
    static = hg_field(0, rate=np.zeros_like(X))
    const_phi = ScalarField(GRID, np.full_like(X, 0.3), d1=np.zeros_like(X))
    assert np.max(np.abs(imag_residual_slice(static, const_phi, P).values)) == 0.0

    r = shrinking_gaussian()
    phi = solve_phase_slice(r, P)
    res = imag_residual_slice(r, phi, P)
    assert np.max(np.abs(res.values[res.mask])) < 1e-8
    assert np.max(np.abs(imag_residual_slice(r, phi, P, method="field").values)) < 1e-8

    wrong = ScalarField(GRID, np.zeros_like(X), d1=np.zeros_like(X))
    res = imag_residual_slice(r.replace(mask=phi.mask), wrong, P)
    m = phi.mask
    np.testing.assert_allclose(res.values[m], P.hbar * r.rate[m] / r.values[m], rtol=1e-12)
    assert np.max(np.abs(res.values[m])) > 0.1


def test_ff_potential_matches_invariant_route_and_boundaries():
    sc = ExpansionScenario(n_slices=21)
    sched, th, prof = sc.schedule(), sc.theta_family(), sc.profile()
    for t in (0.0, 1.3, 2.5, 5.0):
        R = float(sched.R(t))
        V = ff_potential_slice(sc.standard_trap(R), th, sched, t, P)
        ref = invariant_route_potential(sc.grid.x, t, prof, 1.0, P)
        assert np.max(np.abs(V.values - ref)[V.mask]) < 1e-8
        if t in (0.0, 5.0):
            np.testing.assert_array_equal(V.values[V.mask], sc.standard_trap(R).values[V.mask])
    # epsilon x 2 with alpha / 2: identical potential
    t = 1.9
    R = float(sched.R(t))
    a = ff_potential_slice(sc.standard_trap(R), th, sched, t, P)
    b = ff_potential_slice(sc.standard_trap(R), th, sched.rescaled(2.0), t, P)
    np.testing.assert_allclose(a.values, b.values, rtol=0, atol=1e-12)


def test_ff_potential_with_explicit_theta_rate():
    sc = ExpansionScenario(n_slices=21)
    sched = sc.schedule()
    t = 2.0
    R = float(sched.R(t))
    x = sc.grid.x
    theta = ScalarField(sc.grid, -x**2 / (4 * R), d1=-x / (2 * R), rate=x**2 / (4 * R**2))
    V = ff_potential_slice(sc.standard_trap(R), theta, sched, t, P)
    ref = invariant_route_potential(x, t, sc.profile(), 1.0, P)
    np.testing.assert_allclose(V.values, ref, atol=1e-10)
    with pytest.raises(ValueError):
        ff_potential_slice(sc.standard_trap(R), theta.replace(rate=None), sched, t, P)


def test_standard_potential_and_energy():
    R = 1.4
    beta = np.sqrt(R)
    V0 = standard_potential(hg_field(0, beta), 0.5 * R, P)
    m = V0.mask
    np.testing.assert_allclose(V0.values[m], 0.5 * R**2 * X[m] ** 2, atol=1e-9)
    trap = ScalarField(GRID, 0.5 * R**2 * X**2)
    assert standard_energy(hg_field(2, beta), trap, P) == pytest.approx(2.5 * R, rel=1e-12)
    bad = hg_field(0, beta).replace(values=2 * hg_field(0, beta).values)
    with pytest.raises(ValueError):
        standard_potential(bad, 0.5, P)
    with pytest.raises(ValueError):
        standard_energy(bad, trap, P)


def test_energy_offset_shifts_potential_uniformly():
    r = hg_field(0)
    a = standard_potential(r, 0.5, P)
    b = standard_potential(r, 0.5 + 3.0, P)
    np.testing.assert_allclose(b.values - a.values, 3.0, atol=1e-12)
    assert np.argmin(a.values) == np.argmin(b.values)


def test_gp_round_trip():
    """Trap -> GP ground state -> inverted potential recovers the trap."""
    p = PhysicalParams.natural(g=2.0)
    V = 0.5 * X**2
    gs, mu = imaginary_time_ground_state(V, p, GRID, tol=1e-10)
    amp = np.abs(gs.psi)
    # sampled state: FFT round-off (~1e-14 absolute) limits r''/r below ~1e-6 of the peak
    mask = amp > 1e-6 * amp.max()
    r = ScalarField(GRID, amp, d2=spectral_derivative(amp, GRID.dx, 2), mask=mask)
    V0 = standard_potential(r, mu, p)
    assert np.max(np.abs(V0.values - V)[mask]) < 1e-6
    phi = ScalarField(GRID, np.zeros_like(X), d1=np.zeros_like(X), rate=np.full_like(X, -mu / p.hbar))
    Vr = real_potential_slice(r, phi, p)
    assert np.max(np.abs(Vr.values - V)[mask]) < 1e-6
    assert standard_energy(r.replace(d1=spectral_derivative(amp, GRID.dx)), ScalarField(GRID, V), p) == \
        pytest.approx(mu, abs=1e-9)


def test_potential_movie_interpolation_and_reverse(tmp_path):
    times = np.array([0.0, 1.0, 2.0, 3.0])
    vals = np.array([np.full(GRID.n_points, t**2) for t in times])
    lin = PotentialMovie(GRID, times, vals)
    cub = PotentialMovie(GRID, times, vals, interpolation="cubic")
    assert lin.at(1.5)[0] == pytest.approx(2.5)
    assert cub.at(1.5)[0] == pytest.approx(2.25)
    assert lin.at(-1.0)[0] == 0.0 and lin.at(9.0)[0] == 9.0
    rev = cub.reversed()
    assert rev.at(0.5)[0] == pytest.approx(cub.at(2.5)[0])
    assert rev.interpolation == "cubic"
    with pytest.raises(ValueError):
        PotentialMovie(GRID, times, vals[:, :-1])
    with pytest.raises(ValueError):
        PotentialMovie(GRID, times, vals, route="other")
    path = tmp_path / "v.csv"
    lin.to_csv(path)
    rows = path.read_text().splitlines()
    assert rows[0] == "t,x,value" and len(rows) == 1 + 4 * GRID.n_points
    t, x, v = rows[GRID.n_points + 1].split(",")
    assert float(t) == 1.0 and float(x) == GRID.x[0] and float(v) == 1.0
