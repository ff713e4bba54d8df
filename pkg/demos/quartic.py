"""Why the invariant route cannot split a wave packet.

A quadratic-in-momentum invariant can only translate and rescale the
density. Asking it to carry the ground state of x^2 into the ground state
of a double well with the same quartic shape forces rho(t_f)^4 to be
negative: the only "solutions" are complex. The check below prints the
formal values for a few frequency ratios and, for contrast, the feasible
single-well case.

Run with ``python demos/quartic.py``.
"""
from stap import check_ll_feasibility_quartic

w0 = 1.0
for wf in (1.0, 0.5, 0.1):
    rep = check_ll_feasibility_quartic(w0, wf, 1.0)
    rho = complex(*rep.formal_complex_values["rho_tf"])
    print(f"w_f = {wf:4.2f}: feasible={rep.feasible}, rho^4 = {rep.rho_tf_fourth_power:+8.2f}, rho = {rho:.4f}")
print()
ok = check_ll_feasibility_quartic(w0, 0.25, 1.0, final_trap="single-well")
print(f"single well, w_f = 0.25: feasible={ok.feasible}, rho = {ok.formal_complex_values['rho_tf'][0]:.4f}")
print(ok.message)
