"""Moving and expanding a trap at once with a Lewis-Leach potential.

The invariant with scale factor rho(t) and centre alpha(t) is built from a
designed rho (expansion w0 -> w0/2) and a smooth displacement of 3 oscillator
lengths. Each invariant eigenmode, dressed with its Lewis-Riesenfeld phase,
solves the Schroedinger equation exactly; a superposition of two of them
should keep its populations and its <I> fixed while the trap moves.

Run with ``python demos/transport.py``.
"""
import numpy as np

from stap import (ErmakovProfile, InvariantModes, PhysicalParams, PotentialMovie, PropagationConfig, SpatialGrid,
                  WaveState, assemble_mode, design_rho, fidelity, invariant_expectation, make_ramp, propagate)
from stap.domain import RampedFunction
from stap.invariants import invariant_route_potential

p = PhysicalParams.natural()
t_f = 6.0
grid = SpatialGrid.symmetric(30.0, 512)
prof = ErmakovProfile(design_rho(1.0, 0.5, t_f).rho_fn, t_f, RampedFunction(0.0, 3.0, make_ramp(7, 3), t_f))
modes = InvariantModes.harmonic(1.0, p)

times = np.linspace(0, t_f, 61)
movie = PotentialMovie.from_function(grid, times, lambda t: invariant_route_potential(grid.x, t, prof, 1.0, p))
m0, _ = assemble_mode(modes, 0, prof, p, grid, [0.0, t_f])
m1, _ = assemble_mode(modes, 1, prof, p, grid, [0.0, t_f])

psi0 = WaveState(grid, (m0[0].psi + m1[0].psi) / np.sqrt(2))
end, series = propagate(psi0, movie, PropagationConfig(dt=0.005, record_every=100), p,
                        invariant=lambda s: invariant_expectation(s, prof, 1.0, p))

print(f"{'t':>5} {'<I>':>14} {'norm':>16}")
for t, inv, n in zip(series.t, series.invariant, series.norm):
    print(f"{t:5.2f} {inv:14.10f} {n:16.13f}")
pops = [abs(np.vdot(m.psi, end.psi) * grid.dx) ** 2 for m in (m0[1], m1[1])]
print(f"final populations {pops[0]:.8f}, {pops[1]:.8f}  (designed: 0.5, 0.5)")
designed = WaveState(grid, (m0[1].psi + m1[1].psi) / np.sqrt(2))
print(f"fidelity with the dressed superposition at t_f {fidelity(end, designed):.10f}")
