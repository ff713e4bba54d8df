"""Time-dependent Schroedinger / Gross-Pitaevskii propagation and ground states.

This is the independent check on every synthesized potential: the designed
state is thrown away and only V(x, t) is kept.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.linalg import circulant, eigh, solve_banded

from . import _numerics as nm
from .domain import PhysicalParams, ScalarField, SpatialGrid, WaveState
from .errors import ConvergenceError, GridMismatchError, GridTooSmallError, StepSizeError
from .potential_builder import PotentialMovie

SCHEMES = ("strang-split-spectral", "crank-nicolson")


@dataclass(frozen=True)
class PropagationConfig:
    dt: float
    scheme: str = "strang-split-spectral"
    V_cap: float = 1e3
    boundary: str = "periodic"
    nonlinear: bool = True
    record_every: int = 1
    edge_tol: float = 1e-8
    edge_fraction: float = 0.02
    check_every: int = 25
    energy_drift_tol: float = 1e-3

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if self.boundary not in ("periodic", "hard-wall"):
            raise ValueError("boundary must be 'periodic' or 'hard-wall'")
        if not self.V_cap > 0:
            raise ValueError("V_cap must be positive")


@dataclass
class ObservableSeries:
    t: list = field(default_factory=list)
    norm: list = field(default_factory=list)
    energy: list = field(default_factory=list)
    fidelity: list = field(default_factory=list)
    invariant: list = field(default_factory=list)

    def append(self, t, norm, energy, fid, inv):
        self.t.append(float(t))
        self.norm.append(float(norm))
        self.energy.append(float(energy))
        self.fidelity.append(float(fid))
        self.invariant.append(float(inv))

    def as_arrays(self) -> dict:
        return {k: np.asarray(getattr(self, k)) for k in ("t", "norm", "energy", "fidelity", "invariant")}

    def to_csv(self, path, scale_t: float = 1.0, scale_e: float = 1.0) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "norm", "energy", "fidelity", "invariant_expectation"])
            for row in zip(self.t, self.norm, self.energy, self.fidelity, self.invariant):
                t, n, e, f, i = row
                w.writerow([repr(t * scale_t), repr(n), repr(e * scale_e), repr(f), repr(i * scale_e)])


def fidelity(psi: WaveState, target: WaveState) -> float:
    """|<psi|target>|, clipped to [0, 1]; invariant under global phases."""
    if psi.grid != target.grid:
        raise GridMismatchError("states live on different grids")
    ov = np.vdot(psi.psi, target.psi) * psi.grid.dx
    return float(min(abs(ov), 1.0))


def apply_hamiltonian(psi: np.ndarray, V: np.ndarray, grid: SpatialGrid, params: PhysicalParams,
                      g: Optional[float] = None) -> np.ndarray:
    g = params.g if g is None else g
    kin = np.fft.ifft(params.kinetic * grid.k**2 * np.fft.fft(psi))
    return kin + (V + g * np.abs(psi) ** 2) * psi


def gp_energy(psi: np.ndarray, V: np.ndarray, grid: SpatialGrid, params: PhysicalParams,
              g: Optional[float] = None) -> float:
    """E[psi] = int hbar^2 |psi'|^2 / 2m + V |psi|^2 + g |psi|^4 / 2."""
    g = params.g if g is None else g
    dpsi = nm.spectral_derivative(psi, grid.dx)
    rho = np.abs(psi) ** 2
    return float(np.sum(params.kinetic * np.abs(dpsi) ** 2 + V * rho + 0.5 * g * rho**2) * grid.dx)


def eigen_residual(psi: WaveState, V: np.ndarray, energy: float, params: PhysicalParams) -> float:
    """L2 norm of (H - E) psi."""
    r = apply_hamiltonian(psi.psi, V, psi.grid, params) - energy * psi.psi
    return float(np.sqrt(np.sum(np.abs(r) ** 2) * psi.grid.dx))


def _cn_matrix(grid: SpatialGrid, params: PhysicalParams):
    # 4th-order Laplacian, Dirichlet walls
    c = params.kinetic / (12.0 * grid.dx**2)
    return np.array([c, -16.0 * c, 30.0 * c, -16.0 * c, c])


def _banded(diag: np.ndarray, off: np.ndarray, factor: complex) -> np.ndarray:
    n = diag.size
    ab = np.zeros((5, n), dtype=complex)
    ab[0, 2:] = factor * off[0]
    ab[1, 1:] = factor * off[1]
    ab[2, :] = 1.0 + factor * diag
    ab[3, :-1] = factor * off[3]
    ab[4, :-2] = factor * off[4]
    return ab


def _banded_apply(psi: np.ndarray, diag: np.ndarray, off: np.ndarray, factor: complex) -> np.ndarray:
    out = (1.0 + factor * diag) * psi
    out[:-1] += factor * off[3] * psi[1:]
    out[:-2] += factor * off[4] * psi[2:]
    out[1:] += factor * off[1] * psi[:-1]
    out[2:] += factor * off[0] * psi[:-2]
    return out


def propagate(psi0: WaveState, movie: PotentialMovie, config: PropagationConfig, params: PhysicalParams,
              target: Optional[WaveState] = None, invariant: Optional[Callable[[WaveState], float]] = None,
              reverse: bool = False) -> tuple[WaveState, ObservableSeries]:
    """Propagate ``psi0`` through ``movie`` from its first to last slice.

    Strang splitting: half potential kick with V at the step midpoint (plus
    g|psi|^2), kinetic step in k-space, half kick. Crank-Nicolson (4th-order
    differences, hard walls) is available as a cross-check. With
    ``reverse=True`` the run starts at the last slice and steps backwards.

    Raises
    ------
    GridTooSmallError
        The state reaches the edges of the window.
    StepSizeError
        Non-finite values, or energy drift under a static potential.
    """
    grid = psi0.grid
    if movie.grid != grid:
        raise GridMismatchError("state and potential movie use different grids")
    if abs(psi0.norm() - 1.0) > 1e-6:
        raise ValueError(f"initial state is not normalized (norm {psi0.norm():.10g})")
    span = movie.t_end - movie.t_start
    n_steps = int(round(span / config.dt))
    if n_steps < 1 or abs(n_steps * config.dt - span) > 1e-9 * max(span, config.dt):
        raise ValueError(f"dt={config.dt!r} does not divide the movie duration {span!r}")
    sign = -1.0 if reverse else 1.0
    dt = sign * span / n_steps
    t = movie.t_end if reverse else movie.t_start
    hbar = params.hbar
    g = params.g if config.nonlinear else 0.0
    x = grid.x

    edge = max(2, int(config.edge_fraction * grid.n_points))
    wall = np.zeros(grid.n_points)
    if config.boundary == "hard-wall":
        wall[:edge] = wall[-edge:] = config.V_cap

    def potential(tt):
        return np.clip(movie.at(tt), -config.V_cap, config.V_cap) + wall

    static = movie.sampler is None and np.all(movie.values == movie.values[0])
    kinetic_phase = np.exp(-1j * params.kinetic * grid.k**2 * dt / hbar)
    lap = _cn_matrix(grid, params)

    psi = np.array(psi0.psi, dtype=complex)
    series = ObservableSeries()

    def record(tt, state):
        V = potential(tt)
        ws = WaveState(grid, state, tt)
        fid = fidelity(ws, target) if target is not None else np.nan
        inv = invariant(ws) if invariant is not None else np.nan
        series.append(tt, ws.norm(), gp_energy(state, V, grid, params, g), fid, inv)

    record(t, psi)
    e0 = series.energy[0]
    for step in range(1, n_steps + 1):
        t_mid = t + 0.5 * dt
        V = potential(t_mid)
        if config.scheme == "strang-split-spectral":
            psi = psi * np.exp(-0.5j * (V + g * np.abs(psi) ** 2) * dt / hbar)
            psi = np.fft.ifft(kinetic_phase * np.fft.fft(psi))
            psi = psi * np.exp(-0.5j * (V + g * np.abs(psi) ** 2) * dt / hbar)
        else:
            factor = 0.5j * dt / hbar
            dens = np.abs(psi) ** 2
            for _ in range(2 if g else 1):
                diag = V + g * dens + lap[2]
                new = solve_banded((2, 2), _banded(diag, lap, factor), _banded_apply(psi, diag, lap, -factor))
                dens = 0.5 * (np.abs(psi) ** 2 + np.abs(new) ** 2)
            psi = new
        t = (movie.t_end if reverse else movie.t_start) + sign * step * abs(dt)
        if step % config.check_every == 0 or step == n_steps:
            if not np.all(np.isfinite(psi)):
                raise StepSizeError(f"non-finite wavefunction at t={t:.6g}; reduce dt")
            amp = np.abs(psi)
            edge_amp = float(max(amp[:edge].max(), amp[-edge:].max()) / amp.max())
            if edge_amp > config.edge_tol:
                raise GridTooSmallError(
                    f"state reaches the window edge at t={t:.6g} (relative amplitude {edge_amp:.3e})",
                    edge_density=edge_amp**2)
        if step % config.record_every == 0 or step == n_steps:
            record(t, psi)
            if static and abs(series.energy[-1] - e0) > config.energy_drift_tol * max(abs(e0), 1e-300):
                raise StepSizeError(f"energy drift {abs(series.energy[-1] - e0):.3e} under a static potential")
    return WaveState(grid, psi, t), series


def _kinetic_matrix(grid: SpatialGrid, params: PhysicalParams) -> np.ndarray:
    return circulant(np.fft.ifft(params.kinetic * grid.k**2).real)


def imaginary_time_ground_state(V, params: PhysicalParams, grid: Optional[SpatialGrid] = None,
                                tol: float = 1e-9, g: Optional[float] = None, dtau: float = 0.02,
                                relax_steps: int = 400, max_iter: int = 200, mixing: float = 0.5,
                                psi_init: Optional[np.ndarray] = None) -> tuple[WaveState, float]:
    """Ground state of ``T + V + g|psi|^2`` and its chemical potential.

    Runs ``relax_steps`` of normalized imaginary-time split-step relaxation,
    then polishes the fixed point: each mean field is diagonalized on the
    Fourier grid and mixed into the current state until the residual
    ||(H[psi] - mu) psi|| drops below ``tol``.

    Raises
    ------
    ConvergenceError
        If ``max_iter`` polish iterations do not reach ``tol``.
    """
    if isinstance(V, ScalarField):
        grid, V = V.grid, V.values
    if grid is None:
        raise ValueError("a grid is required when V is a plain array")
    V = np.asarray(V, dtype=float)
    g = params.g if g is None else g
    dx, hbar = grid.dx, params.hbar
    V_shift = V - V.min()

    psi = np.exp(-0.5 * V_shift / max(V_shift[V_shift > 0].min(initial=1.0), 1e-12)) if psi_init is None \
        else np.asarray(psi_init, dtype=complex).real
    psi = psi / np.sqrt(np.sum(np.abs(psi) ** 2) * dx)
    kin = np.exp(-params.kinetic * grid.k**2 * dtau / hbar)
    for _ in range(relax_steps):
        psi = psi * np.exp(-0.5 * (V_shift + g * psi**2) * dtau / hbar)
        psi = np.fft.ifft(kin * np.fft.fft(psi)).real
        psi = psi * np.exp(-0.5 * (V_shift + g * psi**2) * dtau / hbar)
        psi /= np.sqrt(np.sum(psi**2) * dx)

    T = _kinetic_matrix(grid, params)
    history = []
    for _ in range(max_iter):
        h_psi = apply_hamiltonian(psi, V, grid, params, g).real
        mu = float(np.sum(psi * h_psi) * dx)
        res = float(np.sqrt(np.sum((h_psi - mu * psi) ** 2) * dx))
        history.append(res)
        if res < tol:
            return WaveState(grid, psi.astype(complex)), mu
        _, vec = eigh(T + np.diag(V + g * psi**2), subset_by_index=[0, 0])
        new = vec[:, 0] / np.sqrt(dx)
        if np.dot(new, psi) < 0:
            new = -new
        psi = new if g == 0 else (1.0 - mixing) * psi + mixing * new
        psi /= np.sqrt(np.sum(psi**2) * dx)
    raise ConvergenceError(f"ground state residual {history[-1]:.3e} > tol {tol:.1e}", history)
