"""Principal half-eigenvalues of sup/inf-of-linear elliptic operators on
balls and their whole-space limits, with certificates, maximum-principle
checks and a Monte-Carlo crosscheck."""

__version__ = "0.1.0"

from .errors import (ConfigurationError, EstimateUnstable, NotDiagonallyDominant, RefusedNoMP,
                     SolverFailure, ThetaTooSmall)
from .operators import (LinearControl, OperatorSpec, check_hypotheses, evaluate, make_preset,
                        pucci_minus, pucci_plus, reflect)
from .grid import Grid, apply_F, assemble_matrix, discretize
from .eigen import EigenResult, continuum_eigenfunction, exhaust, half_eigen, simplicity_probe
from .certificates import (Certificate, beta_certificates, bump_strict_subsolution_check, chain_check,
                           rayleigh_lower_dprime, rayleigh_upper_prime)
from .maxprinciple import comparison, dirichlet_solve, monotone_iteration, mp_verify
from .risk import MCEstimate, SimConfig, simulate_log_growth, sup_over_policies

__all__ = [name for name in dir() if not name.startswith("_")]
