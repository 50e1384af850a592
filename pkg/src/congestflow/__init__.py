"""Two-population crowd motion under a congestion constraint.

Population 1 is transported by an explicit upwind scheme along a velocity
derived from a potential; population 2 is then corrected by a W1 projection
onto the room left free by population 1, solved with a primal-dual method.
"""

__version__ = "0.1.0"

from .grid import Grid, div, grad, inner_product, lambda_adjoint, lambda_op, operator_norm
from .initial import Bump, Complement, Rect, build_initial_density
from .potentials import (Normalization, Padding, PoissonConvergenceError, PotentialKind,
                         PotentialSpec, convolve, face_velocity, gaussian_kernel_value,
                         solve_eikonal, solve_poisson_dirichlet, velocity)
from .projection import (InfeasibleProjection, PdParams, PdState, ProjectionResult, project_w1,
                         prox_dual, prox_primal)
from .simulator import (Scenario, SimulationError, StepDiagnostics, first_contact_step,
                        replay_check, run)
from .transport import (BoundaryMode, CFLError, FaceVelocity, cfl_max_dt, step_transport,
                        upwind_flux)

__all__ = [
    "Grid", "div", "grad", "inner_product", "lambda_adjoint", "lambda_op", "operator_norm",
    "Bump", "Complement", "Rect", "build_initial_density",
    "Normalization", "Padding", "PoissonConvergenceError", "PotentialKind", "PotentialSpec",
    "convolve", "face_velocity", "gaussian_kernel_value", "solve_eikonal",
    "solve_poisson_dirichlet", "velocity",
    "InfeasibleProjection", "PdParams", "PdState", "ProjectionResult", "project_w1",
    "prox_dual", "prox_primal",
    "Scenario", "SimulationError", "StepDiagnostics", "first_contact_step", "replay_check", "run",
    "BoundaryMode", "CFLError", "FaceVelocity", "cfl_max_dt", "step_transport", "upwind_flux",
]
