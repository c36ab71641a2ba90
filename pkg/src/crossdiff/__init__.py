"""Finite-volume simulation and entropy diagnostics for cross-diffusion
systems with Poisson coupling."""

from .coefficients import (CoefficientModel, MSCoefficients, build_A_matrix, check_conditions,
                           custom_model, eval_Q, eval_R, ms_build_A0, ms_invert_A0,
                           preset_ion_transport, preset_maxwell_stefan, preset_skt)
from .entropy import (EntropySpec, entropy_functional, entropy_h, entropy_h_eps,
                      gajewski_identity_check, semimetric, semimetric_family_check)
from .fields import Grid1D, PoissonSolution, SpeciesState, aggregate, hminus1_seminorm, mass, solve_poisson
from .solver import SchemeConfig, aggregate_step, cfl_dt, run, species_flux, step

__version__ = "0.1.0"
