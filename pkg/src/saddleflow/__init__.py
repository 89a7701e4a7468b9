"""Saddle-point solvers built on a damped primal-dual flow.

The package couples two outer schemes (fully implicit and semi-implicit
proximal-gradient discretizations of the flow) with a semi-smooth Newton
inner solver, and applies them to equality-constrained sparse recovery and
total-variation image denoising.  Baseline methods, a continuous-time
simulator for a small test problem, and a config-driven benchmark CLI round
out the toolkit.
"""

from .linalg import (
    CsrMatrix,
    LinearOperator,
    Preconditioner,
    incomplete_cholesky,
    jacobi_precond,
    norm_sq_estimate,
    pcg,
    spmv,
    spmv_t,
)
from .prox import (
    ElasticNet,
    L1Norm,
    ProxOperator,
    RofObjective,
    TvNorm,
    ZeroFunction,
    box_project,
    group_shrink_factor,
    l1_jacobian,
    prox_tv,
    rof_prox,
    soft_threshold,
    tv_jacobian,
)
from .ssn import SsnConfig, SsnReport, SsnSubproblem, ssn_solve
from .problems import (
    L1L2Instance,
    RofInstance,
    add_noise,
    discrete_gradient,
    gen_l1l2,
    gen_rof,
    pgm_read,
    pgm_write,
    shapes_image,
)
from .pdflow import (
    IterRecord,
    ProblemInterface,
    SaddleState,
    ScalingParams,
    SolveResult,
    impd_param_update,
    impd_step,
    kkt_residual_l1l2,
    kkt_residual_rof,
    lyapunov,
    restart_policy,
    semi_param_update,
    semi_pdpg_step,
    semi_step_size,
    solve_l1l2_impd,
    solve_l1l2_semi,
    solve_rof_impd,
)
from .baselines import (
    BaselineResult,
    aadmm_step,
    alb_step,
    apdhg_step,
    solve_l1l2_alb,
    solve_rof_aadmm,
    solve_rof_apdhg,
)
from .flowsim import (
    ToySystem,
    Trajectory,
    integrate_toy,
    linearization_eigs,
    lyapunov_continuous,
    rk4_integrate,
    toy_rhs,
)

__version__ = "0.1.0"
