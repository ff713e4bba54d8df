"""Potentials from a designed state: direct inversion, fast-forward and standard."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicSpline

from . import _numerics as nm
from .domain import PhysicalParams, ScalarField, SpatialGrid
from .phase_solver import FFSchedule, theta_rate

ROUTES = ("direct", "fast_forward", "invariant")


def _continue_masked(values: np.ndarray, x: np.ndarray, mask) -> np.ndarray:
    """Hold the value at the mask boundary outside, interpolate across interior gaps."""
    if mask is None or mask.all():
        return values
    out = values.copy()
    out[~mask] = np.interp(x[~mask], x[mask], values[mask])
    return out


def _laplacian_ratio(r: ScalarField) -> np.ndarray:
    """r''/r, from the analytic side channel when there is one."""
    if r.d2 is not None:
        d2 = r.d2
    else:
        d2 = nm.masked_derivative(r.values, r.grid.dx, 2, r.mask, points=5)
    with np.errstate(divide="ignore", invalid="ignore"):
        return d2 / r.values


@dataclass(frozen=True, eq=False)
class PotentialMovie:
    """V(x, t) on a set of time slices.

    Between slices V is interpolated linearly, or with a not-a-knot cubic
    spline in time when ``interpolation="cubic"``. A ``sampler``
    (``sampler(t) -> V(x)``) overrides both.
    """

    grid: SpatialGrid
    times: np.ndarray
    values: np.ndarray
    route: str = "direct"
    energy_zero: str = "phi(anchor)=0, h=0"
    masks: Optional[np.ndarray] = None
    sampler: Optional[Callable[[float], np.ndarray]] = field(default=None, repr=False)
    interpolation: str = "linear"

    def __post_init__(self):
        if self.route not in ROUTES:
            raise ValueError(f"route must be one of {ROUTES}")
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape != (times.size, self.grid.n_points):
            raise ValueError("values must have shape (n_times, n_points)")
        if times.size == 0:
            raise ValueError("empty potential movie")
        if self.interpolation not in ("linear", "cubic"):
            raise ValueError("interpolation must be 'linear' or 'cubic'")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        spline = None
        if self.interpolation == "cubic" and times.size >= 4:
            spline = CubicSpline(times, values, axis=0)
        object.__setattr__(self, "_spline", spline)

    @classmethod
    def from_function(cls, grid, times, func: Callable[[float], np.ndarray], route="invariant", **kw):
        times = np.asarray(times, dtype=float)
        return cls(grid, times, np.array([func(t) for t in times]), route=route, sampler=func, **kw)

    @property
    def t_start(self) -> float:
        return float(self.times[0])

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    def at(self, t: float) -> np.ndarray:
        if self.sampler is not None:
            return np.asarray(self.sampler(t), dtype=float)
        ts = self.times
        if self._spline is not None and ts[0] <= t <= ts[-1]:
            return self._spline(t)
        if t <= ts[0]:
            return self.values[0]
        if t >= ts[-1]:
            return self.values[-1]
        j = int(np.searchsorted(ts, t)) - 1
        w = (t - ts[j]) / (ts[j + 1] - ts[j])
        return (1.0 - w) * self.values[j] + w * self.values[j + 1]

    def reversed(self) -> "PotentialMovie":
        """Same movie played backwards on the time axis ``t -> t0 + t1 - t``."""
        t0, t1 = self.t_start, self.t_end
        samp = None if self.sampler is None else (lambda t, f=self.sampler: f(t0 + t1 - t))
        masks = None if self.masks is None else self.masks[::-1]
        return PotentialMovie(self.grid, (t0 + t1 - self.times)[::-1], self.values[::-1], self.route,
                              self.energy_zero, masks, samp, self.interpolation)

    def to_csv(self, path, scale_x: float = 1.0, scale_t: float = 1.0, scale_v: float = 1.0) -> None:
        """Write ``t,x,value`` rows, time-major, shortest round-trip decimals."""
        x = (self.grid.x * scale_x).tolist()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x", "value"])
            for t, row in zip(self.times * scale_t, self.values * scale_v):
                tr = repr(float(t))
                w.writerows(zip([tr] * len(x), map(repr, x), map(repr, row.tolist())))

    def to_npz(self, path) -> None:
        np.savez(path, t=self.times, x=self.grid.x, V=self.values,
                 mask=self.masks if self.masks is not None else np.ones_like(self.values, bool))


def real_potential_slice(r: ScalarField, phi: ScalarField, params: PhysicalParams,
                         clamp: bool = True) -> ScalarField:
    """V = -hbar phi_t + hbar^2/2m (r''/r - phi'^2) - g r^2 on populated points.

    ``phi.rate`` must hold phi-dot. Masked points take the value at the mask
    boundary when ``clamp`` is set, NaN otherwise.
    """
    if phi.rate is None:
        raise ValueError("phi needs its time derivative (rate) to build the real potential")
    mask = r.mask if r.mask is not None else phi.mask
    dphi = phi.derivative(1)
    V = -params.hbar * phi.rate + params.kinetic * (_laplacian_ratio(r) - dphi**2) - params.g * r.values**2
    if mask is not None:
        V = np.where(mask, V, np.nan)
        if clamp:
            V = _continue_masked(V, r.grid.x, mask)
    return ScalarField(r.grid, V, mask=mask)


def imag_residual_slice(r: ScalarField, phi: ScalarField, params: PhysicalParams,
                        method: str = "fd", points: int = 13) -> ScalarField:
    """Imaginary part of the inverted potential; zero for a valid phase.

    ``method="fd"`` differentiates phi' with ``points``-wide stencils
    restricted to populated points, independently of how phi was obtained.
    Narrow stencils are truncation limited near density dips (9 points give
    ~1e-8 for fast splitting drives). ``"field"`` trusts the ``d2`` side
    channel.
    """
    mask = r.mask if r.mask is not None else phi.mask
    if mask is None:
        mask = np.ones(r.grid.n_points, bool)
    dphi = phi.derivative(1)
    if method == "field" and phi.d2 is not None:
        d2phi = phi.d2
    elif method in ("fd", "field"):
        d2phi = nm.masked_derivative(dphi, r.grid.dx, 1, mask, points=points)
    else:
        raise ValueError(f"unknown method {method!r}")
    rate = r.rate if r.rate is not None else np.zeros(r.grid.n_points)
    with np.errstate(divide="ignore", invalid="ignore"):
        res = params.hbar * rate / r.values + params.kinetic * (2.0 * dphi * r.derivative(1) / r.values + d2phi)
    return ScalarField(r.grid, np.where(mask, res, 0.0), mask=mask)


def ff_potential_slice(v0: ScalarField, theta, schedule: FFSchedule, t: float,
                       params: PhysicalParams) -> ScalarField:
    """Fast-forward driving potential at time ``t``.

    V = V0 - hbar eps alpha' theta - hbar eps^2 alpha^2 dtheta/dR
        - (hbar^2/2m) eps^2 alpha^2 theta'^2

    ``theta`` is either a ScalarField at R(t) carrying ``rate`` = dtheta/dR,
    or a callable ``R -> ScalarField``; for the latter the R-derivative is
    taken by centred differences when the field does not carry it.
    """
    R = float(schedule.R(t))
    if callable(theta) and not isinstance(theta, ScalarField):
        th = theta(R)
        dth = th.rate if th.rate is not None else theta_rate(theta, R)
    else:
        th = theta
        if th.rate is None:
            raise ValueError("theta needs dtheta/dR (rate) or must be given as a family")
        dth = th.rate
    eps, al, ald = schedule.epsilon, float(schedule.alpha(t)), float(schedule.alpha_dot(t))
    thp = th.derivative(1)
    V = (v0.values - params.hbar * eps * ald * th.values - params.hbar * eps**2 * al**2 * dth
         - params.kinetic * eps**2 * al**2 * thp**2)
    mask = th.mask if th.mask is not None else v0.mask
    if not np.all(np.isfinite(V)):
        mask = np.isfinite(V) if mask is None else mask & np.isfinite(V)
    if mask is not None:
        V = _continue_masked(np.where(mask, V, np.nan), v0.grid.x, mask)
    return ScalarField(v0.grid, V, mask=mask)


def _check_normalized(r: ScalarField, tol: float = 1e-6) -> None:
    n = float(np.sum(r.values**2) * r.grid.dx)
    if abs(n - 1.0) > tol:
        raise ValueError(f"amplitude is not normalized (norm {n:.8g})")


def standard_potential(r_tilde: ScalarField, energy: float, params: PhysicalParams,
                       density_floor: float = 1e-8) -> ScalarField:
    """Stationary trap V0 = E + (hbar^2/2m) r''/r - g r^2 that holds ``r_tilde``."""
    _check_normalized(r_tilde)
    mask = r_tilde.mask
    if mask is None:
        a = np.abs(r_tilde.values)
        mask = a > density_floor * a.max()
    V = energy + params.kinetic * _laplacian_ratio(r_tilde) - params.g * r_tilde.values**2
    V = _continue_masked(np.where(mask, V, np.nan), r_tilde.grid.x, mask)
    return ScalarField(r_tilde.grid, V, mask=mask)


def standard_energy(r_tilde: ScalarField, v0: ScalarField, params: PhysicalParams) -> float:
    """Rayleigh quotient of the stationary GP operator (the eigenvalue, not E[psi])."""
    _check_normalized(r_tilde)
    dx = r_tilde.grid.dx
    dr = r_tilde.d1 if r_tilde.d1 is not None else nm.spectral_derivative(r_tilde.values, dx)
    r2 = r_tilde.values**2
    num = np.sum(params.kinetic * dr**2 + v0.values * r2 + params.g * r2**2) * dx
    return float(num / (np.sum(r2) * dx))
