"""Phase that makes the inverted potential real.

Given a designed amplitude r(x, t), the imaginary part of the inverted
potential vanishes iff the continuity equation holds,

    (r^2 phi')' = -(m / hbar) d/dt (r^2),

which is first order in phi'. It is integrated exactly as a flux,
``r^2 phi' = -(m/hbar) * d/dt int_{-inf}^x r^2``, followed by a second
quadrature for phi. The same routine serves the fast-forward form where the
slow parameter is the control R instead of t.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import _numerics as nm
from .domain import PhysicalParams, ScalarField, SpatialGrid, TimeGrid
from .errors import AmbiguousGaugeWarning, IllConditionedPhaseError

DENSITY_FLOOR = 1e-8


@dataclass(frozen=True)
class FFSchedule:
    """Control R(t), its scale epsilon and the derived magnification factor.

    ``control`` is called as ``control(t, derivative)``. With
    ``alpha = R'/epsilon`` only the products ``epsilon * alpha`` etc. enter
    any physical quantity.
    """

    control: Callable
    time_grid: TimeGrid
    epsilon: float = 1.0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")

    @property
    def times(self) -> np.ndarray:
        return self.time_grid.times

    @property
    def t_f(self) -> float:
        return self.time_grid.t_f

    def R(self, t, derivative: int = 0):
        return self.control(t, derivative)

    def alpha(self, t):
        return self.control(t, 1) / self.epsilon

    def alpha_dot(self, t):
        return self.control(t, 2) / self.epsilon

    def Lambda(self, t=None) -> np.ndarray:
        """Integral of alpha from 0, by Gauss-Legendre panels between samples."""
        t = self.times if t is None else np.atleast_1d(np.asarray(t, dtype=float))
        pts = np.concatenate([[0.0], t])
        return nm.composite_gauss(self.alpha, pts)[1:]

    def rescaled(self, factor: float) -> "FFSchedule":
        return FFSchedule(self.control, self.time_grid, self.epsilon * factor)

    def boundary_violation(self) -> float:
        """Largest |alpha| or |alpha'| at t=0 and t=t_f."""
        ends = np.array([0.0, self.t_f])
        return float(max(np.max(np.abs(self.alpha(ends))), np.max(np.abs(self.alpha_dot(ends)))))


@dataclass(frozen=True, eq=False)
class PhaseField:
    """phi(x, t) on a time grid, with phi' and phi-dot when available."""

    grid: SpatialGrid
    times: np.ndarray
    values: np.ndarray
    d1: Optional[np.ndarray] = None
    rate: Optional[np.ndarray] = None
    masks: Optional[np.ndarray] = None
    hbar: float = 1.0
    slices: Sequence[ScalarField] = field(default=(), repr=False)

    @classmethod
    def from_slices(cls, times, slices: Sequence[ScalarField], hbar: float = 1.0, rate=None) -> "PhaseField":
        times = np.asarray(times, dtype=float)
        values = np.array([s.values for s in slices])
        d1 = None if any(s.d1 is None for s in slices) else np.array([s.d1 for s in slices])
        masks = None if any(s.mask is None for s in slices) else np.array([s.mask for s in slices])
        if rate is None:
            rate = nm.time_derivative(values, times[1] - times[0])
        return cls(slices[0].grid, times, values, d1, np.asarray(rate), masks, hbar, tuple(slices))

    def __len__(self) -> int:
        return len(self.times)

    def slice(self, i: int) -> ScalarField:
        base = self.slices[i] if self.slices else ScalarField(
            self.grid, self.values[i], None if self.d1 is None else self.d1[i],
            mask=None if self.masks is None else self.masks[i])
        return base.replace(rate=None if self.rate is None else self.rate[i])

    def _mask(self, i):
        return np.ones(self.grid.n_points, bool) if self.masks is None else self.masks[i]

    def boundary_spread(self) -> tuple[float, float]:
        """max - min of phi over populated points at t=0 and t=t_f."""
        out = []
        for i in (0, -1):
            v = self.values[i][self._mask(i)]
            out.append(float(v.max() - v.min()))
        return out[0], out[1]

    def boundary_energies(self) -> tuple[float, float]:
        """-hbar * phi-dot at the two ends (averaged over populated points)."""
        if self.rate is None:
            raise ValueError("phase rate not available")
        return tuple(float(-self.hbar * np.mean(self.rate[i][self._mask(i)])) for i in (0, -1))


def density_mask(r: ScalarField, density_floor: float = DENSITY_FLOOR) -> np.ndarray:
    a = np.abs(r.values)
    return a > density_floor * a.max()


def resolve_anchor(r: ScalarField, anchor_x: float = 0.0, mask=None) -> float:
    """The anchor actually used: ``anchor_x``, or the density maximum if r has a node there."""
    x = r.grid.x
    a = np.abs(r.values)
    if mask is None:
        mask = density_mask(r)
    inside = x[0] <= anchor_x <= x[-1]
    if inside:
        j = int(np.argmin(np.abs(x - anchor_x)))
        ra = abs(nm.lagrange_at(anchor_x, x, r.values))
        if mask[j] and ra > 1e-3 * a.max():
            return float(anchor_x)
    return float(x[np.argmax(a)])


def _flux(r: ScalarField, params: PhysicalParams) -> np.ndarray:
    """m/hbar times the running integral of d(r^2) from the left edge."""
    x = r.grid.x
    if r.sampler is not None:
        def source(p):
            s = r.sampler(p)
            return 2.0 * s.value * s.rate
        cells, abs_cells = nm.gauss_cell_integrals(source, x)
    else:
        src = 2.0 * r.values * r.rate
        cells = nm.cell_integrals(src, r.grid.dx)
        abs_cells = 0.5 * r.grid.dx * (np.abs(src[1:]) + np.abs(src[:-1]))
    return (params.mass / params.hbar) * nm.two_sided_cumulative(cells, abs_cells)


def solve_phase_slice(r: ScalarField, params: PhysicalParams, anchor_x: float = 0.0,
                      density_floor: float = DENSITY_FLOOR, allow_nodal_gaps: bool = False) -> ScalarField:
    """Solve the reality condition for phi at one instant.

    Parameters
    ----------
    r : ScalarField
        Amplitude with ``rate`` = dr/dt. A ``sampler`` gives tail-accurate
        quadrature; otherwise an 8-point nodal rule is used.
    params : PhysicalParams
    anchor_x : float
        Point where phi = 0. Moved to the density maximum if r vanishes there.
    density_floor : float
        Points with |r| below ``density_floor * max|r|`` are masked; phi is
        continued as a constant across them.
    allow_nodal_gaps : bool
        Accept masked gaps between populated regions (nodes of excited
        states). The phase is then carried across each gap as a constant, a
        gauge choice that is flagged with :class:`AmbiguousGaugeWarning`.

    Returns
    -------
    ScalarField
        phi with ``d1`` = phi' from the flux and ``d2`` = phi'' from the
        flux relation, and the density mask.

    Notes
    -----
    The flux vanishes at both ends of the window, so phi'(anchor) = 0 holds
    whenever the anchor splits the density rate evenly (e.g. x = 0 for even
    amplitudes).
    """
    if r.rate is None:
        raise ValueError("the amplitude needs its rate (dr/dt) to solve for the phase")
    x, dx = r.grid.x, r.grid.dx
    mask = density_mask(r, density_floor)
    pieces = nm.runs(mask)
    if not pieces:
        raise IllConditionedPhaseError("amplitude is below the density floor everywhere")
    if len(pieces) > 1:
        gap = (float(x[pieces[0][1] + 1]), float(x[pieces[1][0] - 1]))
        if not allow_nodal_gaps:
            raise IllConditionedPhaseError(
                f"density vanishes on [{gap[0]:.6g}, {gap[1]:.6g}] between populated regions", interval=gap)
        warnings.warn(f"{len(pieces)} populated subdomains; phase continued as a constant across gaps",
                      AmbiguousGaugeWarning, stacklevel=2)
    anchor = resolve_anchor(r, anchor_x, mask)

    flux = _flux(r, params)
    vals = r.values
    dphi = np.zeros_like(vals)
    dphi[mask] = -flux[mask] / vals[mask] ** 2

    phi = np.concatenate([[0.0], np.cumsum(nm.cell_integrals(dphi, dx, mask))])
    phi -= nm.lagrange_at(anchor, x, phi, mask)
    phi[~mask] = np.interp(x[~mask], x[mask], phi[mask])

    d2 = None
    if r.d1 is not None:
        d2 = np.zeros_like(vals)
        rm, rdm, rpm = vals[mask], r.rate[mask], r.d1[mask]
        d2[mask] = -(params.mass / params.hbar) * 2.0 * rdm / rm + 2.0 * flux[mask] * rpm / rm**3
    return ScalarField(r.grid, phi, d1=dphi, d2=d2, mask=mask, provenance=r.provenance)


def solve_phase_movie(r_at: Callable[[float], ScalarField], times, params: PhysicalParams,
                      anchor_x: float = 0.0, density_floor: float = DENSITY_FLOOR,
                      allow_nodal_gaps: bool = False, rate_step: Optional[float] = None,
                      mapper=map) -> PhaseField:
    """Solve phi on every time in ``times`` and attach phi-dot.

    By default phi-dot is the 4th-order difference over the slices
    themselves. With ``rate_step`` = h it is a 5-point difference of fresh
    solves at t + j h (shifted one-sided at the ends of ``times``), which is
    far more accurate when slices are coarse; points where a stencil member
    is masked are dropped from the slice mask. ``mapper`` lets callers run
    the independent solves in parallel.
    """
    times = np.asarray(times, dtype=float)

    def solve(t):
        return solve_phase_slice(r_at(float(t)), params, anchor_x, density_floor, allow_nodal_gaps)

    slices = list(mapper(solve, times))
    if rate_step is None:
        return PhaseField.from_slices(times, slices, params.hbar)
    h = float(rate_step)
    t0, t1 = times[0], times[-1]

    def rate(i):
        t = times[i]
        lo = max(-4, int(np.ceil((t0 - t) / h - 1e-9)))
        hi = min(4, int(np.floor((t1 - t) / h + 1e-9)))
        start = int(np.clip(-2, lo, hi - 4))
        offsets = tuple(range(start, start + 5))
        w = nm._offset_weights(offsets, 1) / h
        acc = np.zeros(slices[i].grid.n_points)
        mask = slices[i].mask.copy()
        for wj, j in zip(w, offsets):
            sl = slices[i] if j == 0 else solve(t + j * h)
            mask &= sl.mask
            acc += wj * sl.values
        return acc, mask

    out = list(mapper(rate, range(times.size)))
    slices = [sl.replace(mask=m) for sl, (_, m) in zip(slices, out)]
    return PhaseField.from_slices(times, slices, params.hbar, rate=np.array([a for a, _ in out]))


def solve_theta(r_tilde: ScalarField, params: PhysicalParams, anchor_x: float = 0.0,
                density_floor: float = DENSITY_FLOOR, allow_nodal_gaps: bool = False) -> ScalarField:
    """Fast-forward phase theta(x, R) at fixed control value.

    ``r_tilde.rate`` must hold dr~/dR. theta solves
    ``r theta'' + 2 r' theta' + (2m/hbar) dr/dR = 0`` with theta(anchor) = 0.
    """
    return solve_phase_slice(r_tilde, params, anchor_x, density_floor, allow_nodal_gaps)


_RATE_STENCIL = np.array([-1.0, 9.0, -45.0, 0.0, 45.0, -9.0, 1.0]) / 60.0


def theta_rate(theta_at: Callable[[float], ScalarField], R: float, rel_step: float = 2e-3) -> np.ndarray:
    """d theta / dR by a 6th-order centred difference over the family.

    NaN where any member of the stencil is masked (continued, not solved).
    """
    h = rel_step * max(abs(R), 1e-12)
    acc = np.zeros(theta_at(R).grid.n_points)
    for w, j in zip(_RATE_STENCIL, range(-3, 4)):
        th = theta_at(R + j * h)
        if th.mask is not None:
            acc[~th.mask] = np.nan
        if w:
            acc += w * th.values
    return acc / h


def assemble_ff_phase(theta_at: Callable[[float], ScalarField], schedule: FFSchedule,
                      energy: Callable[[float], float], params: PhysicalParams) -> PhaseField:
    """phi(x, t) = -(1/hbar) int_0^t E(R) dt' + eps * alpha(t) * theta(x, R(t)).

    ``theta_at(R)`` returns theta as a ScalarField (``d1`` = theta',
    optional ``rate`` = dtheta/dR). The returned field carries phi-dot in
    closed form.
    """
    t = schedule.times
    R = np.asarray(schedule.R(t), dtype=float)
    e_of_t = np.vectorize(lambda tt: energy(float(schedule.R(tt))))
    e_int = nm.composite_gauss(e_of_t, t)
    eps = schedule.epsilon
    al, ald, Rd = schedule.alpha(t), schedule.alpha_dot(t), schedule.R(t, 1)
    slices, rates = [], []
    for i, ti in enumerate(t):
        th = theta_at(float(R[i]))
        thp = th.derivative(1)
        dth = th.rate if th.rate is not None else theta_rate(theta_at, float(R[i]))
        valid = np.isfinite(dth)
        mask = valid if th.mask is None else th.mask & valid
        dth = np.where(valid, dth, 0.0)
        phi = -e_int[i] / params.hbar + eps * al[i] * th.values
        slices.append(ScalarField(th.grid, phi, d1=eps * al[i] * thp, mask=mask, provenance=th.provenance))
        rates.append(-e_of_t(ti) / params.hbar + eps * ald[i] * th.values + eps * al[i] * dth * Rd[i])
    return PhaseField.from_slices(t, slices, params.hbar, rate=np.array(rates))
