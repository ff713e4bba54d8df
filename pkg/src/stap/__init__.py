"""Inverse-engineered trap potentials for shortcuts to adiabaticity.

Fast-forward and invariant-based potential synthesis in 1D, each checked by
direct propagation of the Schroedinger / Gross-Pitaevskii equation.
"""
from .domain import (HBAR_SI, FieldSample, NaturalUnits, PhysicalParams, RampPolynomial, ScalarField,
                     SpatialGrid, TimeGrid, WaveState, eval_ramp, make_ramp)
from .errors import (AmbiguousGaugeWarning, ConvergenceError, GridMismatchError, GridTooSmallError,
                     IllConditionedPhaseError, ModeTruncationError, StapError, StepSizeError)
from .invariants import (ErmakovProfile, InvariantModes, LLSpec, assemble_mode, check_ll_feasibility_quartic,
                         design_rho, integrate_ermakov, invariant_expectation, lr_phase, omega_from_rho,
                         solve_newton_alpha, solve_sigma_modes)
from .phase_solver import (FFSchedule, PhaseField, assemble_ff_phase, solve_phase_movie, solve_phase_slice,
                           solve_theta)
from .potential_builder import (PotentialMovie, ff_potential_slice, imag_residual_slice, real_potential_slice,
                                standard_energy, standard_potential)
from .propagator import (ObservableSeries, PropagationConfig, fidelity, gp_energy,
                         imaginary_time_ground_state, propagate)
from .scenarios import (ExpansionScenario, SplittingScenario, build_split_amplitude, run_expansion,
                        run_propagator_checks, run_quartic_infeasibility, run_splitting)

__version__ = "0.1.0"
