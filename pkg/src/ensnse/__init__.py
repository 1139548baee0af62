"""Ensemble Navier-Stokes solver with a blended BDF time integrator on P2-P1 elements."""

from .analytics import (ErrorSeries, consistency_check, convergence_rate, discrete_norm_20,
                        discrete_norm_inf0, energy_ledger, truncation_probe)
from .assembly import Operators, assemble_convection, convection_action, trilinear
from .femspace import TaylorHoodSpace, build_space
from .harness import (ConfigError, ConvergenceTable, RunConfig, ladder, run_convergence,
                      run_simulation)
from .linsolve import Factorization, SingularMatrixError, factorize, solve_multi
from .mesh import Mesh, refine, unit_square_mesh
from .problems import PROBLEMS, ethier_steinman, green_taylor
from .stepper import (EnsembleState, NumericalBlowup, StepReport, advance, bdf_coefficients,
                      en_bdf2_coefficients, startup)

__version__ = "0.1.0"
