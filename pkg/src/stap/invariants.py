"""Lewis-Riesenfeld invariants for Lewis-Leach potentials (1D).

A potential of the form

    V(x, t) = -F(t) x + m w^2(t) x^2 / 2 + U(sigma) / rho^2 + h(t),
    sigma = (x - alpha) / rho,

admits a quadratic-in-momentum invariant provided rho solves the Ermakov
equation and alpha a forced oscillator equation. Its eigenmodes, dressed by
a scaling/translation and a phase, solve the Schroedinger equation exactly.
In 1D the scaling prefactor is rho^(-1/2).
"""
from __future__ import annotations

import cmath
import json
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import circulant, eigh

from . import _numerics as nm
from .domain import (ConstantFunction, FieldSample, PhysicalParams, RampPolynomial, RampedFunction,
                     ScalarField, SpatialGrid, WaveState, make_ramp)
from .errors import ModeTruncationError
from .phase_solver import PhaseField


# ---------------------------------------------------------------------------
# auxiliary functions

@dataclass(frozen=True)
class LLSpec:
    """Data of a Lewis-Leach potential; all entries are callables of time except U."""

    omega0: float
    omega_sq: Callable
    force: Callable = field(default_factory=ConstantFunction)
    U: Optional[Callable] = None
    h: Callable = field(default_factory=ConstantFunction)
    kappa: float = 0.0

    def potential(self, x, t: float, profile: "ErmakovProfile", params: PhysicalParams) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        rho, alpha = profile.rho(t), profile.alpha(t)
        V = -self.force(t) * x + 0.5 * params.mass * self.omega_sq(t) * x**2 + self.h(t)
        if self.U is not None:
            V = V + self.U((x - alpha) / rho) / rho**2
        return V


@dataclass(frozen=True)
class ErmakovProfile:
    """Scale factor rho(t) and translation alpha(t), callable as ``f(t, derivative)``."""

    rho_fn: Callable
    t_f: float
    alpha_fn: Callable = field(default_factory=ConstantFunction)
    provenance: str = "designed-polynomial"

    def __post_init__(self):
        if self.provenance not in ("designed-polynomial", "integrated-IVP"):
            raise ValueError(f"unknown provenance {self.provenance!r}")

    def rho(self, t, derivative: int = 0):
        return self.rho_fn(t, derivative)

    def alpha(self, t, derivative: int = 0):
        return self.alpha_fn(t, derivative)

    def min_rho(self, samples: int = 2001) -> float:
        return float(np.min(self.rho(np.linspace(0.0, self.t_f, samples))))


class IVPFunction:
    """Dense solution of ``y'' = accel(t, y, y')`` with derivatives 0, 1, 2."""

    def __init__(self, accel: Callable, t_f: float, y0: float, v0: float,
                 rtol: float = 1e-12, atol: float = 1e-14):
        self.accel, self.t_f = accel, float(t_f)
        sol = solve_ivp(lambda t, s: [s[1], accel(t, s[0], s[1])], (0.0, t_f), [y0, v0],
                        method="DOP853", rtol=rtol, atol=atol, dense_output=True)
        if not sol.success:
            raise RuntimeError(f"ODE integration failed: {sol.message}")
        self.solution = sol

    def __call__(self, t, derivative: int = 0):
        t_arr = np.asarray(t, dtype=float)
        y, v = self.solution.sol(np.clip(t_arr, 0.0, self.t_f))
        if derivative == 0:
            out = y
        elif derivative == 1:
            out = v
        elif derivative == 2:
            out = np.vectorize(self.accel)(t_arr, y, v)
        else:
            raise ValueError("only derivatives up to 2 are available")
        return float(out) if np.ndim(out) == 0 else np.asarray(out, dtype=float)


def design_rho(omega0: float, omega_f: float, t_f: float,
               ramp: Optional[RampPolynomial] = None) -> ErmakovProfile:
    """rho(t) = 1 + (gamma - 1) P(t/t_f), gamma = sqrt(omega0/omega_f).

    The ramp must be flat to second order so that rho' and rho'' vanish at
    both ends; the default is the quintic step.
    """
    if not (omega0 > 0 and omega_f > 0 and t_f > 0):
        raise ValueError("omega0, omega_f and t_f must be positive")
    ramp = make_ramp(5, 2) if ramp is None else ramp
    if ramp.flatness < 2:
        raise ValueError("rho needs a ramp with flatness order >= 2")
    gamma = float(np.sqrt(omega0 / omega_f))
    return ErmakovProfile(RampedFunction(1.0, gamma, ramp, t_f), t_f)


def omega_from_rho(profile: ErmakovProfile, omega0: float) -> Callable:
    """Trap curvature w^2(t) = omega0^2 / rho^4 - rho''/rho (may go negative)."""
    def omega_sq(t):
        rho = profile.rho(t)
        return omega0**2 / rho**4 - profile.rho(t, 2) / rho
    return omega_sq


def integrate_ermakov(omega_sq: Callable, omega0: float, t_f: float, rho0: float = 1.0,
                      rho_dot0: float = 0.0, rtol: float = 1e-12) -> ErmakovProfile:
    """Forward-integrate rho'' = omega0^2/rho^3 - w^2(t) rho."""
    fn = IVPFunction(lambda t, y, v: omega0**2 / y**3 - omega_sq(t) * y, t_f, rho0, rho_dot0, rtol=rtol)
    return ErmakovProfile(fn, t_f, provenance="integrated-IVP")


def ermakov_residual(profile: ErmakovProfile, omega_sq: Callable, omega0: float, t) -> np.ndarray:
    rho = profile.rho(t)
    return profile.rho(t, 2) + omega_sq(t) * rho - omega0**2 / rho**3


def solve_newton_alpha(force: Callable, omega_sq: Callable, params: PhysicalParams, t_f: float,
                       alpha0: float = 0.0, alpha_dot0: float = 0.0) -> IVPFunction:
    """alpha'' + w^2(t) alpha = F(t)/m as an initial value problem."""
    m = params.mass
    return IVPFunction(lambda t, y, v: force(t) / m - omega_sq(t) * y, t_f, alpha0, alpha_dot0)


def force_from_alpha(alpha: Callable, omega_sq: Callable, params: PhysicalParams) -> Callable:
    """Inverse use of the Newton equation: F(t) = m (alpha'' + w^2 alpha)."""
    def force(t):
        return params.mass * (alpha(t, 2) + omega_sq(t) * alpha(t))
    return force


# ---------------------------------------------------------------------------
# modes

def hermite_functions(n_max: int, x, beta: float = 1.0) -> np.ndarray:
    """Normalized Hermite-Gauss functions 0..n_max at ``x`` (stable recurrence)."""
    xi = beta * np.asarray(x, dtype=float)
    out = np.empty((n_max + 1,) + xi.shape)
    out[0] = np.sqrt(beta) * np.pi**-0.25 * np.exp(-0.5 * xi**2)
    if n_max >= 1:
        out[1] = np.sqrt(2.0) * xi * out[0]
    for n in range(1, n_max):
        out[n + 1] = np.sqrt(2.0 / (n + 1)) * xi * out[n] - np.sqrt(n / (n + 1)) * out[n - 1]
    return out


def hermite_gauss(n: int, x, beta: float = 1.0) -> FieldSample:
    """Value and first two x-derivatives of the n-th Hermite-Gauss function.

    The derivatives use the ladder relation, not the differential equation.
    ``rate`` is d/d(beta).
    """
    h = hermite_functions(n + 2, x, beta)

    def deriv(j):
        lower = h[j - 1] if j >= 1 else 0.0
        return beta * (np.sqrt(j / 2.0) * lower - np.sqrt((j + 1) / 2.0) * h[j + 1])

    d1 = deriv(n)
    d2 = beta * (np.sqrt(n / 2.0) * (deriv(n - 1) if n >= 1 else 0.0) - np.sqrt((n + 1) / 2.0) * deriv(n + 1))
    xa = np.asarray(x, dtype=float)
    dbeta = h[n] / (2.0 * beta) + xa * d1 / beta
    return FieldSample(h[n], d1, d2, dbeta)


@dataclass(frozen=True, eq=False)
class InvariantModes:
    """Eigenpairs of the sigma-space operator -hbar^2/2m d^2 + m w0^2 s^2/2 + U(s).

    Modes are stored on a sigma grid and evaluated off-grid by trigonometric
    interpolation, or, for U = 0, in closed form (``beta`` set).
    """

    eigenvalues: np.ndarray
    omega0: float
    grid: Optional[SpatialGrid] = None
    vectors: Optional[np.ndarray] = None
    beta: Optional[float] = None

    @classmethod
    def harmonic(cls, omega0: float, params: PhysicalParams, n_max: int = 8) -> "InvariantModes":
        lam = params.hbar * omega0 * (np.arange(n_max) + 0.5)
        return cls(lam, omega0, beta=float(np.sqrt(params.mass * omega0 / params.hbar)))

    @property
    def count(self) -> int:
        return len(self.eigenvalues)

    def evaluate(self, n: int, sigma, derivative: int = 0) -> np.ndarray:
        sigma = np.asarray(sigma, dtype=float)
        if self.beta is not None:
            s = hermite_gauss(n, sigma, self.beta)
            return (s.value, s.d1, s.d2)[derivative]
        g = self.grid
        coef = np.fft.fft(self.vectors[n]) / g.n_points
        k = g.k
        if g.n_points % 2 == 0:
            coef[g.n_points // 2] = 0.0  # Nyquist term has no unique continuation
        flat = sigma.ravel()
        out = np.empty(flat.size)
        fac = (1j * k) ** derivative
        for lo in range(0, flat.size, 512):
            s = flat[lo:lo + 512]
            out[lo:lo + 512] = (np.exp(1j * np.outer(s - g.x_min, k)) @ (fac * coef)).real
        out[(flat < g.x_min) | (flat > g.x_max)] = 0.0
        return out.reshape(sigma.shape)


def solve_sigma_modes(U: Optional[Callable], omega0: float, params: PhysicalParams, grid: SpatialGrid,
                      n_max: int = 8, edge_tol: float = 1e-6) -> InvariantModes:
    """Lowest ``n_max`` eigenpairs on ``grid`` (dense Fourier-grid Hamiltonian).

    Raises :class:`ModeTruncationError` if the highest requested mode reaches
    the edges of the window or the top of the resolvable kinetic band.
    """
    s = grid.x
    kin = params.kinetic * grid.k**2
    T = circulant(np.fft.ifft(kin).real)
    pot = 0.5 * params.mass * omega0**2 * s**2 + (0.0 if U is None else np.asarray(U(s), dtype=float))
    if not np.all(np.isfinite(pot)):
        raise ValueError("U must be finite on the sigma grid")
    lam, vec = eigh(T + np.diag(pot), subset_by_index=[0, n_max - 1])
    vec = vec.T / np.sqrt(grid.dx)
    edge = max(2, grid.n_points // 40)
    for n in range(n_max):
        v = vec[n]
        # fix the sign: positive on the far right where the mode is non-negligible
        big = np.flatnonzero(np.abs(v) > 1e-3 * np.abs(v).max())
        if v[big[-1]] < 0:
            vec[n] = -v
    top = vec[-1]
    edge_amp = max(np.abs(top[:edge]).max(), np.abs(top[-edge:]).max()) / np.abs(top).max()
    if edge_amp > edge_tol or lam[-1] > 0.25 * kin.max():
        raise ModeTruncationError(
            f"mode {n_max - 1} is not resolved on the sigma grid (edge amplitude {edge_amp:.2e})")
    return InvariantModes(lam, omega0, grid, vec)


# ---------------------------------------------------------------------------
# dressed modes, phases and the invariant

def _lr_integrand(lam: float, profile: ErmakovProfile, params: PhysicalParams, omega0: float,
                  h: Optional[Callable]):
    m, hbar = params.mass, params.hbar

    def f(t):
        rho, rd = profile.rho(t), profile.rho(t, 1)
        al, ald = profile.alpha(t), profile.alpha(t, 1)
        val = lam / rho**2 + m * ((ald * rho - al * rd) ** 2 - omega0**2 * al**2 / rho**2) / (2.0 * rho**2)
        if h is not None:
            val = val + h(t)
        return -val / hbar
    return f


def lr_phase(lam: float, profile: ErmakovProfile, params: PhysicalParams, times, omega0: float,
             h: Optional[Callable] = None) -> np.ndarray:
    """Lewis-Riesenfeld phase alpha_n(t) at the (sorted) ``times``.

    Real phase with hbar d(alpha_n)/dt = <psi_n| i hbar d_t - H |psi_n>,
    integrated with 16-point Gauss-Legendre panels no wider than t_f/32.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    pts = np.concatenate([[0.0], times])
    width = profile.t_f / 32 if profile.t_f > 0 else None
    return nm.composite_gauss(_lr_integrand(lam, profile, params, omega0, h), pts, max_width=width)[1:]


def mode_amplitude(modes: InvariantModes, n: int, profile: ErmakovProfile, t: float,
                   grid: SpatialGrid) -> ScalarField:
    """r_n(x, t) = rho^(-1/2) chi_n(sigma) with x- and t-derivatives (and a sampler)."""
    rho, rd = float(profile.rho(t)), float(profile.rho(t, 1))
    al, ald = float(profile.alpha(t)), float(profile.alpha(t, 1))

    def sampler(x):
        s = (x - al) / rho
        c0, c1, c2 = (modes.evaluate(n, s, d) for d in range(3))
        s_dot = -ald / rho - (x - al) * rd / rho**2
        pref = rho**-0.5
        return FieldSample(pref * c0, pref * c1 / rho, pref * c2 / rho**2,
                           pref * (-0.5 * rd / rho * c0 + c1 * s_dot))

    return ScalarField.from_sampler(grid, sampler)


def mode_phase(profile: ErmakovProfile, t: float, x, params: PhysicalParams, lr: float,
               lr_rate: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Phase of a dressed mode (including its LR phase) with phi' and phi-dot."""
    m, hbar = params.mass, params.hbar
    rho, rd, rdd = (float(profile.rho(t, d)) for d in range(3))
    al, ald, aldd = (float(profile.alpha(t, d)) for d in range(3))
    lin = ald - al * rd / rho
    lin_dot = aldd - ald * rd / rho - al * (rdd / rho - rd**2 / rho**2)
    quad = rd / (2.0 * rho)
    quad_dot = (rdd / rho - rd**2 / rho**2) / 2.0
    phi = (m / hbar) * (quad * x**2 + lin * x) + lr
    dphi = (m / hbar) * (2.0 * quad * x + lin)
    rate = (m / hbar) * (quad_dot * x**2 + lin_dot * x) + lr_rate
    return phi, dphi, rate


def assemble_mode(modes: InvariantModes, n: int, profile: ErmakovProfile, params: PhysicalParams,
                  grid: SpatialGrid, times, h: Optional[Callable] = None) -> tuple[list, PhaseField]:
    """Exact solution e^{i alpha_n} psi_n(x, t) on ``times`` and its phase field."""
    times = np.asarray(times, dtype=float)
    lam = float(modes.eigenvalues[n])
    lr = lr_phase(lam, profile, params, times, modes.omega0, h)
    integrand = _lr_integrand(lam, profile, params, modes.omega0, h)
    x = grid.x
    states, slices, rates = [], [], []
    for t, a_n in zip(times, lr):
        amp = mode_amplitude(modes, n, profile, t, grid)
        phi, dphi, rate = mode_phase(profile, t, x, params, a_n, float(integrand(t)))
        states.append(WaveState(grid, amp.values * np.exp(1j * phi), t))
        curvature = params.mass / params.hbar * profile.rho(t, 1) / profile.rho(t)
        slices.append(ScalarField(grid, phi, d1=dphi, d2=np.full_like(x, curvature), provenance="analytic"))
        rates.append(rate)
    return states, PhaseField.from_slices(times, slices, params.hbar, rate=np.array(rates))


def invariant_route_potential(x, t: float, profile: ErmakovProfile, omega0: float, params: PhysicalParams,
                              U: Optional[Callable] = None, h: Optional[Callable] = None) -> np.ndarray:
    """Lewis-Leach potential implied by a designed (rho, alpha).

    w^2 = omega0^2/rho^4 - rho''/rho and F = m (alpha'' + w^2 alpha).
    """
    x = np.asarray(x, dtype=float)
    rho, rdd = profile.rho(t), profile.rho(t, 2)
    w2 = omega0**2 / rho**4 - rdd / rho
    al, aldd = profile.alpha(t), profile.alpha(t, 2)
    V = -params.mass * (aldd + al * w2) * x + 0.5 * params.mass * w2 * x**2
    if U is not None:
        V = V + U((x - al) / rho) / rho**2
    if h is not None:
        V = V + h(t)
    return V


def invariant_expectation(psi: WaveState, profile: ErmakovProfile, omega0: float, params: PhysicalParams,
                          U: Optional[Callable] = None, norm_tol: float = 1e-6) -> float:
    """<I> at ``psi.t``; momentum applied spectrally."""
    norm = psi.norm()
    if abs(norm - 1.0) > norm_tol:
        raise ValueError(f"state is not normalized (norm {norm:.10g})")
    t, g = psi.t, psi.grid
    x, m = g.x, params.mass
    rho, rd = profile.rho(t), profile.rho(t, 1)
    al, ald = profile.alpha(t), profile.alpha(t, 1)
    p_psi = params.hbar * np.fft.ifft(g.k * np.fft.fft(psi.psi))
    a_psi = rho * (p_psi - m * ald * psi.psi) - m * rd * (x - al) * psi.psi
    sigma = (x - al) / rho
    pot = 0.5 * m * omega0**2 * sigma**2 + (0.0 if U is None else U(sigma))
    return float((np.sum(np.abs(a_psi) ** 2) / (2.0 * m) + np.sum(pot * psi.density)) * g.dx)


# ---------------------------------------------------------------------------
# quartic traps

@dataclass(frozen=True)
class FeasibilityReport:
    feasible: bool
    rho_tf_fourth_power: float
    formal_complex_values: dict
    message: str

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def check_ll_feasibility_quartic(omega0: float, omega_f: float, eta0: float,
                                 final_trap: str = "double-well") -> FeasibilityReport:
    """Can a quadratic invariant connect a quartic single well to the final trap?

    With quartic strength eta(t) = kappa / rho^6 and kappa = eta0, commutation
    of H and I at t_f needs rho(t_f)^4 = omega0^2 / w^2(t_f). For the double
    well (w^2(t_f) = -omega_f^2) this is negative: rho(t_f) would be complex.
    ``final_trap="single-well"`` takes w^2(t_f) = +omega_f^2 instead.
    """
    if not (omega0 > 0 and omega_f > 0 and eta0 > 0):
        raise ValueError("omega0, omega_f and eta0 must be positive")
    if final_trap not in ("double-well", "single-well"):
        raise ValueError("final_trap must be 'double-well' or 'single-well'")
    sign = -1.0 if final_trap == "double-well" else 1.0
    rho4 = omega0**2 / (sign * omega_f**2)
    rho2 = cmath.sqrt(rho4)
    rho = cmath.sqrt(rho2)
    eta_f = eta0 / rho2**3
    feasible = rho4 > 0
    values = {"rho_tf": [rho.real, rho.imag], "rho_tf_squared": [rho2.real, rho2.imag],
              "eta_f": [eta_f.real, eta_f.imag]}
    if feasible:
        msg = (f"feasible: rho(t_f) = {rho.real:.6g} and eta_f = {eta_f.real:.6g}; the final density is a "
               "scaled copy of the initial one")
    else:
        msg = (f"infeasible: rho(t_f)^4 = {rho4:.6g} < 0 has no positive real root, so rho(t_f) and eta_f "
               "would be complex. Quadratic invariants only connect densities related by a translation and/or "
               "scaling, and a single well cannot be mapped onto a double well that way.")
    return FeasibilityReport(bool(feasible), float(rho4), values, msg)
