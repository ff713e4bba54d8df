"""Core value types: physical constants, grids, sampled fields and ramps."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from math import perm
from typing import Callable, NamedTuple, Optional

import numpy as np
from numpy.polynomial import Polynomial

from . import _numerics as nm

HBAR_SI = 1.054571817e-34


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class PhysicalParams:
    """Mass, reduced Planck constant and 1D mean-field coupling.

    ``units`` is a tag only ("natural" for hbar = m = 1, or "si"); every
    routine takes ``mass`` and ``hbar`` from here, so either system works as
    long as all inputs agree with it.
    """

    mass: float = 1.0
    hbar: float = 1.0
    g: float = 0.0
    units: str = "natural"

    def __post_init__(self):
        if not self.mass > 0 or not self.hbar > 0:
            raise ValueError("mass and hbar must be positive")
        if not np.isfinite(self.g):
            raise ValueError("g must be finite")
        if self.units not in ("natural", "si"):
            raise ValueError(f"unknown unit system {self.units!r}")

    @classmethod
    def natural(cls, g: float = 0.0) -> "PhysicalParams":
        return cls(1.0, 1.0, g, "natural")

    @property
    def kinetic(self) -> float:
        """hbar^2 / 2m, the prefactor of the Laplacian."""
        return self.hbar**2 / (2.0 * self.mass)


@dataclass(frozen=True)
class NaturalUnits:
    """Oscillator units built from a mass and an angular frequency (SI in, SI out)."""

    mass: float
    omega: float
    hbar: float = HBAR_SI

    def __post_init__(self):
        if not (self.mass > 0 and self.omega > 0 and self.hbar > 0):
            raise ValueError("mass, omega and hbar must be positive")

    @property
    def length(self) -> float:
        return float(np.sqrt(self.hbar / (self.mass * self.omega)))

    @property
    def time(self) -> float:
        return 1.0 / self.omega

    @property
    def energy(self) -> float:
        return self.hbar * self.omega

    def coupling(self, g_si: float) -> float:
        """1D coupling (J m) in units of hbar*omega*length."""
        return g_si / (self.energy * self.length)

    def params(self, g_si: float = 0.0) -> PhysicalParams:
        return PhysicalParams.natural(self.coupling(g_si))


@dataclass(frozen=True)
class SpatialGrid:
    x_min: float
    x_max: float
    n_points: int

    def __post_init__(self):
        n = int(self.n_points)
        if n < 16 or n & (n - 1):
            raise ValueError(f"n_points must be a power of two >= 16, got {self.n_points}")
        if not self.x_max > self.x_min:
            raise ValueError("x_max must exceed x_min")

    @classmethod
    def symmetric(cls, half_width: float, n_points: int) -> "SpatialGrid":
        return cls(-half_width, half_width, n_points)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n_points - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n_points)

    @property
    def k(self) -> np.ndarray:
        """Angular wavenumbers in FFT order (period ``n_points * dx``)."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n_points, d=self.dx)

    def scaled(self, factor: float) -> "SpatialGrid":
        return SpatialGrid(self.x_min * factor, self.x_max * factor, self.n_points)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform samples ``0, dt, ..., t_f`` (``n_steps + 1`` of them)."""

    t_f: float
    n_steps: int

    def __post_init__(self):
        if not self.t_f > 0 or int(self.n_steps) < 1:
            raise ValueError("t_f must be positive and n_steps >= 1")

    @classmethod
    def with_samples(cls, t_f: float, n_samples: int) -> "TimeGrid":
        return cls(t_f, n_samples - 1)

    @property
    def dt(self) -> float:
        return self.t_f / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.t_f, self.n_steps + 1)

    def __len__(self) -> int:
        return self.n_steps + 1


class FieldSample(NamedTuple):
    """Closed-form evaluation of a field and its derivatives at arbitrary points."""

    value: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    rate: Optional[np.ndarray]


@dataclass(frozen=True, eq=False)
class ScalarField:
    """A real field sampled on a grid, with optional derivative side channels.

    ``d1`` and ``d2`` are the first and second spatial derivatives. ``rate`` is
    the derivative with respect to the slow parameter of the family the field
    belongs to: time for r(x, t) and phi(x, t), the control parameter for the
    fast-forward amplitude r(x, R). ``sampler`` evaluates the same quantities
    off-grid and is what lets quadratures run at full accuracy in the tails.
    """

    grid: SpatialGrid
    values: np.ndarray
    d1: Optional[np.ndarray] = None
    d2: Optional[np.ndarray] = None
    rate: Optional[np.ndarray] = None
    mask: Optional[np.ndarray] = None
    sampler: Optional[Callable[[np.ndarray], FieldSample]] = field(default=None, repr=False)
    provenance: str = "sampled"

    def __post_init__(self):
        n = self.grid.n_points
        for name in ("values", "d1", "d2", "rate"):
            a = getattr(self, name)
            if a is None:
                continue
            a = _frozen(a)
            if a.shape != (n,):
                raise ValueError(f"{name} has shape {a.shape}, expected ({n},)")
            object.__setattr__(self, name, a)
        if self.mask is not None:
            m = _frozen(self.mask, dtype=bool)
            if m.shape != (n,):
                raise ValueError("mask length does not match the grid")
            object.__setattr__(self, "mask", m)
        if self.provenance not in ("analytic", "sampled"):
            raise ValueError(f"unknown provenance {self.provenance!r}")

    @classmethod
    def from_sampler(cls, grid: SpatialGrid, sampler: Callable[[np.ndarray], FieldSample]) -> "ScalarField":
        s = sampler(grid.x)
        return cls(grid, s.value, s.d1, s.d2, s.rate, sampler=sampler, provenance="analytic")

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    def replace(self, **changes) -> "ScalarField":
        kw = dict(grid=self.grid, values=self.values, d1=self.d1, d2=self.d2, rate=self.rate,
                  mask=self.mask, sampler=self.sampler, provenance=self.provenance)
        kw.update(changes)
        return ScalarField(**kw)

    def derivative(self, order: int = 1) -> np.ndarray:
        """Spatial derivative: the side channel if present, else 9-point differences."""
        stored = {1: self.d1, 2: self.d2}.get(order)
        if stored is not None:
            return stored
        return nm.masked_derivative(self.values, self.grid.dx, order, self.mask)


@dataclass(frozen=True, eq=False)
class WaveState:
    grid: SpatialGrid
    psi: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        a = _frozen(self.psi, dtype=complex)
        if a.shape != (self.grid.n_points,):
            raise ValueError("psi length does not match the grid")
        object.__setattr__(self, "psi", a)

    @property
    def density(self) -> np.ndarray:
        return np.abs(self.psi) ** 2

    def norm(self) -> float:
        return float(np.sum(self.density) * self.grid.dx)

    def normalized(self) -> "WaveState":
        return WaveState(self.grid, self.psi / np.sqrt(self.norm()), self.t)

    def at_time(self, t: float) -> "WaveState":
        return WaveState(self.grid, self.psi, t)


@dataclass(frozen=True)
class RampPolynomial:
    """Smooth step P(s) on [0, 1] with P(0)=0, P(1)=1 and flat ends.

    ``flatness`` is the number of derivatives that vanish at both ends.
    """

    degree: int
    coefficients: tuple
    flatness: int

    @property
    def polynomial(self) -> Polynomial:
        return Polynomial(self.coefficients)

    def __call__(self, s, derivative: int = 0):
        p = self.polynomial.deriv(derivative) if derivative else self.polynomial
        return p(s)


def _solve_exact(aug: list) -> list:
    """Gauss-Jordan elimination on an augmented matrix of Fractions."""
    n = len(aug)
    for col in range(n):
        piv = next(r for r in range(col, n) if aug[r][col] != 0)
        aug[col], aug[piv] = aug[piv], aug[col]
        p = aug[col][col]
        aug[col] = [v / p for v in aug[col]]
        for r in range(n):
            if r != col and aug[r][col] != 0:
                f = aug[r][col]
                aug[r] = [a - f * b for a, b in zip(aug[r], aug[col])]
    return [row[-1] for row in aug]


def make_ramp(degree: int = 7, flatness: int = 3) -> RampPolynomial:
    """Build the unique polynomial step with ``flatness`` vanishing end derivatives.

    Parameters
    ----------
    degree : int
        Polynomial degree; must equal ``2 * flatness + 1``.
    flatness : int
        Number of derivatives (1..k) forced to zero at s=0 and s=1.

    Returns
    -------
    RampPolynomial
        Coefficients of the (2k+2)-square boundary system, solved in exact
        rational arithmetic (the solution is integral).

    Examples
    --------
    >>> make_ramp(3, 1).coefficients
    (0.0, 0.0, 3.0, -2.0)
    """
    if degree != 2 * flatness + 1 or flatness < 0:
        raise ValueError(f"degree must equal 2k+1 (got degree={degree}, k={flatness})")
    n = degree + 1
    rows = []
    for end, value in ((0, 0), (1, 1)):
        for d in range(flatness + 1):
            # d-th derivative of s**j at s=end
            row = [Fraction(perm(j, d) * end ** (j - d)) if j >= d else Fraction(0) for j in range(n)]
            rows.append(row + [Fraction(value if d == 0 else 0)])
    coeffs = _solve_exact(rows)
    return RampPolynomial(degree, tuple(float(c) + 0.0 for c in coeffs), flatness)


def eval_ramp(ramp: RampPolynomial, t, t_f: float, derivative_order: int = 0):
    """Time derivative ``d^n/dt^n P(t / t_f)``, including the ``t_f**-n`` factor."""
    t_arr = np.asarray(t, dtype=float)
    tol = 1e-12 * t_f
    if np.any(t_arr < -tol) or np.any(t_arr > t_f + tol):
        raise ValueError(f"t outside [0, {t_f}]")
    s = np.clip(t_arr / t_f, 0.0, 1.0)
    out = ramp(s, derivative_order) / t_f**derivative_order
    return float(out) if np.ndim(out) == 0 else out


class RampedFunction:
    """``start + (end - start) * P(t / t_f)`` with time derivatives on demand.

    Outside ``[0, t_f]`` the function is held at its end values.
    """

    def __init__(self, start: float, end: float, ramp: RampPolynomial, t_f: float):
        self.start, self.end, self.ramp, self.t_f = float(start), float(end), ramp, float(t_f)

    def __call__(self, t, derivative: int = 0):
        t = np.asarray(t, dtype=float)
        s = np.clip(t / self.t_f, 0.0, 1.0)
        inside = (t >= 0) & (t <= self.t_f)
        if derivative == 0:
            out = self.start + (self.end - self.start) * self.ramp(s)
        else:
            out = (self.end - self.start) * self.ramp(s, derivative) / self.t_f**derivative
            out = np.where(inside, out, 0.0)
        return float(out) if out.ndim == 0 else out


class ConstantFunction:
    def __init__(self, value: float = 0.0):
        self.value = float(value)

    def __call__(self, t, derivative: int = 0):
        t = np.asarray(t, dtype=float)
        out = np.full(t.shape, self.value if derivative == 0 else 0.0)
        return float(out) if out.ndim == 0 else out
