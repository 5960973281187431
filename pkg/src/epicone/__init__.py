"""Barrier oracles and an interior-point solver for spectral epigraph cones.

The cone is K = cl{(u, v, W) : v > 0, W > 0, u >= v tr g(W/v)} for a
scalar kernel g whose derivative is matrix monotone, and the barrier is
Gamma = -log(u - v phi(W/v)) - log v - logdet W with parameter 2 + d.
"""

from .cone_barrier import (
    AdaptedModel,
    BarrierOracle,
    ConePoint,
    Direction,
    adapted_model,
    barrier_d2_dir,
    barrier_d3_dir,
    barrier_eval,
    barrier_grad,
    barrier_hess_apply,
    barrier_hess_dense,
    barrier_value,
    cone_dim,
    in_interior,
    zeta,
    zeta_d2,
    zeta_d3,
)
from .errors import *  # noqa: F401,F403
from .ipm_solver import (
    ConicProblem,
    SolverConfig,
    SolveResult,
    epigraph_pinning_problem,
    newton_step,
    residuals,
    solve,
    trace_entropy_problem,
)
from .matrix_calculus import phi_d3_form, phi_grad, phi_hess_apply, phi_value, smat, svec
from .scb_verifier import Tolerances, TrialConfig, run_campaign, run_suite
from .spectral_functions import (
    ADMISSIBLE_DEFAULTS,
    NEGATIVE_CONTROL,
    FunctionFamily,
    g_deriv,
    g_value,
    validate_family,
)

__version__ = "0.1.0"
