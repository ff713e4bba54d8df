"""Shortcut expansion of a harmonic trap, built two ways.

A ground state of a trap with frequency w0 is expanded to w0/10 in
t_f = 5/w0, roughly a tenth of the adiabatic time scale. The driving
potential is first obtained from the fast-forward construction (a real
phase theta(x, R) attached to the instantaneous eigenstate), then from the
Ermakov scale factor rho(t). The two must coincide; the propagated state
must end in the ground state of the final trap.

Run with ``python demos/expansion.py``.
"""
import numpy as np

from stap import ExpansionScenario, omega_from_rho, run_expansion

sc = ExpansionScenario(omega0=1.0, omega_f=0.1, t_f=5.0)
prof = sc.profile()
w2 = omega_from_rho(prof, sc.omega0)

print("scale factor and trap frequency along the ramp (natural units)")
print(f"{'t':>6} {'rho':>9} {'omega^2':>10}")
for t in np.linspace(0, sc.t_f, 11):
    print(f"{t:6.2f} {prof.rho(t):9.5f} {w2(t):10.5f}")
print("omega^2 dips below zero: for part of the ramp the trap is inverted.\n")

res = run_expansion(sc)
rep = res.report
print(f"fast-forward vs Ermakov route, max |dV|  {rep['route_max_abs_dV']:.2e}")
print(f"ground-state fidelity at t_f             {rep['fidelity']:.14f}")
print(f"<I> relative drift                       {rep['invariant_relative_drift']:.1e}")
print(f"populations of (|0> + |1>)/sqrt 2        {rep['superposition_populations']}")
print("gates:", ", ".join(f"{k}={'ok' if v else 'FAIL'}" for k, v in rep["gates"].items()))
