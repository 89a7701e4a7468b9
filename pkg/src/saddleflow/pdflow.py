"""Outer saddle-point solvers discretizing a scaled primal-dual flow.

Two schemes are provided.  The fully implicit scheme (``impd_*``) treats the
whole objective through its prox and places no restriction on the step size.
The semi-implicit proximal-gradient scheme (``semi_*``) splits the objective
into a smooth part, handled by an explicit gradient, and a prox-friendly
part; its step size follows a quadratic law tied to the parameter schedule.

Both advance a pair of positive scalars (gamma, beta) that damp the primal
and dual motions.  Each iteration solves a strongly monotone dual equation
with the semi-smooth Newton module and then recovers the primal point by one
prox evaluation.  The dual iterate is maintained in eliminated form,

    lam_k = xi + (A x_k - b) / beta_k,

with the conserved vector ``xi`` frozen at the start (and rebased only on
restarts), which keeps the scheme's conservation law exact in floating
point.  The Newton output, a near-root of the dual equation, is carried
alongside for warm starts and for the convergence test.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from .linalg import CsrMatrix, LinearOperator, incomplete_cholesky
from .prox import (
    DiagonalJacobian,
    ElasticNet,
    L1Norm,
    ProxOperator,
    RofObjective,
    soft_threshold,
    prox_tv,
)
from .ssn import SsnConfig, SsnReport, SsnSubproblem, ssn_solve

__all__ = [
    "ScalingParams",
    "SaddleState",
    "IterRecord",
    "SmoothPart",
    "ProblemInterface",
    "DenseConstraint",
    "RofConstraint",
    "impd_param_update",
    "semi_param_update",
    "semi_step_size",
    "make_dual_subproblem",
    "impd_step",
    "semi_pdpg_step",
    "kkt_residual_l1l2",
    "kkt_residual_rof",
    "lyapunov",
    "restart_policy",
    "SolveResult",
    "run_flow",
    "l1l2_problem",
    "rof_problem",
    "default_init",
    "solve_l1l2_semi",
    "solve_l1l2_impd",
    "solve_rof_impd",
    "reference_saddle_l1l2",
    "write_iter_csv",
    "CSV_HEADER",
]

CSV_HEADER = "k,alpha,gamma,beta,res_x,res_lambda,res_p,feas,lyapunov,xi_drift,ssn_iters,pcg_avg,time_s"


# -- parameter schedule ----------------------------------------------------

@dataclass(frozen=True)
class ScalingParams:
    """Damping scalars of the flow plus the smooth part's constants.

    ``gamma`` damps the primal motion, ``beta`` the dual one; ``mu`` is the
    convexity modulus credited to the smooth part and ``lipschitz`` its
    gradient Lipschitz constant (both zero for fully implicit use).
    """

    gamma: float
    beta: float
    mu: float = 0.0
    lipschitz: float = 0.0

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        if self.mu < 0 or self.lipschitz < 0:
            raise ValueError("mu and lipschitz must be nonnegative")


def impd_param_update(p: ScalingParams, alpha: float) -> ScalingParams:
    """Implicit-scheme schedule: divide beta by ``1 + alpha`` and move gamma
    toward ``mu`` with the same weight."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    return replace(
        p,
        beta=p.beta / (1.0 + alpha),
        gamma=(p.mu * alpha + p.gamma) / (1.0 + alpha),
    )


def semi_param_update(p: ScalingParams, alpha: float) -> ScalingParams:
    """Semi-implicit schedule: scale beta by ``1 - alpha`` and take the
    convex combination of gamma with ``mu``."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    return replace(
        p,
        beta=p.beta * (1.0 - alpha),
        gamma=p.mu * alpha + (1.0 - alpha) * p.gamma,
    )


def semi_step_size(p: ScalingParams) -> float:
    """Step size of the semi-implicit scheme.

    With ``sigma = L + 2 gamma - mu`` and discriminant
    ``sigma^2 + 4 gamma (mu - gamma)`` the step is
    ``alpha = 2 gamma / (sigma + sqrt(disc))``, the root of the quadratic
    that makes ``alpha * (L + gamma_next) = gamma_next`` hold exactly.
    """
    L, mu, gamma = p.lipschitz, p.mu, p.gamma
    if L < mu:
        raise ValueError("lipschitz constant must dominate the modulus")
    sigma = L + 2.0 * gamma - mu
    disc = sigma * sigma + 4.0 * gamma * (mu - gamma)
    assert disc >= 0.0, "step-size discriminant must be nonnegative"
    alpha = 2.0 * gamma / (sigma + math.sqrt(disc))
    assert 0.0 < alpha <= 1.0
    return alpha


# -- state, records, problem interface ------------------------------------

@dataclass
class SaddleState:
    """Primal-dual iterate with the cached constraint residual ``A x - b``.

    ``newton_dual`` carries the latest Newton-solve output: the warm start
    for the next dual equation and the dual point used by the stopping test.
    """

    x: np.ndarray
    lam: np.ndarray
    resid: np.ndarray
    newton_dual: Optional[np.ndarray] = None


@dataclass
class IterRecord:
    """One iteration's diagnostics; ``res_p`` and ``lyapunov`` stay ``None``
    when not applicable."""

    k: int
    alpha: float
    gamma: float
    beta: float
    res_x: float
    res_lambda: float
    res_p: Optional[float]
    feas: float
    lyapunov: Optional[float]
    xi_drift: float
    ssn_iters: int
    pcg_avg: float
    time_s: float
    pcg_total: int = 0
    flagged: bool = False

    @property
    def res_max(self) -> float:
        parts = [self.res_x, self.res_lambda]
        if self.res_p is not None:
            parts.append(self.res_p)
        return max(parts)


@dataclass(frozen=True)
class SmoothPart:
    """Differentiable objective block: value, gradient, and its constants."""

    value: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]
    lipschitz: float
    modulus: float


@dataclass
class ProblemInterface:
    """Everything a scheme needs: constraint operator, right-hand side,
    prox-friendly block, optional smooth block, and a residual evaluator
    returning ``(res_x, res_lambda, res_p or None)``."""

    constraint: object
    b: np.ndarray
    nonsmooth: ProxOperator
    smooth: Optional[SmoothPart] = None
    kkt: Optional[Callable[[np.ndarray, np.ndarray], Tuple[float, float, Optional[float]]]] = None

    def objective(self, x: np.ndarray) -> float:
        val = self.nonsmooth.value(x)
        if self.smooth is not None:
            val += self.smooth.value(x)
        return val


# -- constraint operators --------------------------------------------------

class DenseConstraint:
    """Dense equality-constraint matrix with direct Newton-system assembly."""

    def __init__(self, matrix: np.ndarray):
        self.mat = np.asarray(matrix, dtype=float)
        self.dual_dim, self.primal_dim = self.mat.shape
        self._sq = self.mat ** 2

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.mat @ x

    def apply_t(self, lam: np.ndarray) -> np.ndarray:
        return self.mat.T @ lam

    def dual_jacobian_operator(self, sel, beta_next: float, theta: float, cache=None) -> LinearOperator:
        if not isinstance(sel, DiagonalJacobian):
            raise TypeError("dense constraints expect a diagonal prox Jacobian")
        w = sel.weights

        def mv(v):
            return beta_next * v + theta * (self.mat @ (w * (self.mat.T @ v)))

        return LinearOperator(
            self.dual_dim, mv, diagonal=lambda: beta_next + theta * (self._sq @ w)
        )

    def dual_jacobian_matrix(self, sel, beta_next: float, theta: float, cache=None) -> np.ndarray:
        if not isinstance(sel, DiagonalJacobian):
            raise TypeError("dense constraints expect a diagonal prox Jacobian")
        w = sel.weights
        active = np.flatnonzero(w)
        J = np.zeros((self.dual_dim, self.dual_dim))
        if active.size:
            cols = self.mat[:, active]
            J = theta * ((cols * w[active]) @ cols.T)
        J[np.diag_indices_from(J)] += beta_next
        return J


class RofConstraint:
    """Coupling operator for denoising: maps ``X = (u; p)`` to ``p - G u``
    where ``G`` is the discrete gradient; precomputes ``G G^T`` for Newton
    systems."""

    def __init__(self, grad: CsrMatrix):
        self.grad = grad.scipy()
        self.n_pixels = grad.shape[1]
        self.dual_dim = grad.shape[0]
        self.primal_dim = self.n_pixels + self.dual_dim
        self.gram = (self.grad @ self.grad.T).tocsr()
        self.gram.sort_indices()
        self._eye = sp.identity(self.dual_dim, format="csr")

    def split(self, X: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return X[: self.n_pixels], X[self.n_pixels :]

    def apply(self, X: np.ndarray) -> np.ndarray:
        u, p = self.split(X)
        return p - self.grad @ u

    def apply_t(self, lam: np.ndarray) -> np.ndarray:
        return np.concatenate([-(self.grad.T @ lam), lam])

    def _assemble(self, sel, beta_next: float, theta: float, cache=None) -> sp.csr_matrix:
        if cache is not None and "newton_matrix" in cache:
            return cache["newton_matrix"]
        blocks = sel.blocks
        k = len(blocks.t11)
        coupling = sp.bmat(
            [
                [sp.diags(blocks.t11), sp.diags(blocks.t12)],
                [sp.diags(blocks.t21), sp.diags(blocks.t22)],
            ],
            format="csr",
        )
        J = (beta_next * self._eye + theta * coupling + (theta * sel.u_scale) * self.gram).tocsr()
        J.sort_indices()
        if cache is not None:
            cache["newton_matrix"] = J
        return J

    def dual_jacobian_operator(self, sel, beta_next: float, theta: float, cache=None) -> LinearOperator:
        J = self._assemble(sel, beta_next, theta, cache)
        return LinearOperator(self.dual_dim, lambda v: J @ v, diagonal=lambda: J.diagonal())

    def dual_jacobian_precond(self, sel, beta_next: float, theta: float, cache=None):
        J = self._assemble(sel, beta_next, theta, cache)
        return incomplete_cholesky(CsrMatrix.from_scipy(J))


# -- dual subproblem -------------------------------------------------------

def make_dual_subproblem(
    constraint,
    prox_op: ProxOperator,
    base: np.ndarray,
    z: np.ndarray,
    beta_next: float,
    theta: float,
    use_ic_precond: bool = False,
) -> SsnSubproblem:
    """Build the dual root problem ``beta' lam - A prox(base - theta A^T lam) - z``.

    The merit handed to the Newton solver is the strongly convex function
    whose gradient is this map; its conjugate term is evaluated at the
    complementary prox point so feasibility is automatic up to round-off.
    """

    def evaluate(lam):
        shifted = base - theta * constraint.apply_t(lam)
        prox_val = prox_op.prox(shifted, theta)
        return shifted, prox_val

    def residual(lam):
        shifted, prox_val = evaluate(lam)
        F = beta_next * lam - constraint.apply(prox_val) - z
        return F, {"shifted": shifted, "prox": prox_val}

    def merit(lam):
        shifted, prox_val = evaluate(lam)
        conj = prox_op.conjugate_value((shifted - prox_val) / theta)
        if not np.isfinite(conj):
            return np.inf
        return (
            0.5 * beta_next * float(lam @ lam)
            - float(z @ lam)
            + conj
            + float(prox_val @ prox_val) / (2.0 * theta)
        )

    def jacobian(lam, cache):
        sel = prox_op.jacobian_selection(cache["shifted"], theta)
        return constraint.dual_jacobian_operator(sel, beta_next, theta, cache)

    jacobian_matrix = None
    if hasattr(constraint, "dual_jacobian_matrix"):
        def jacobian_matrix(lam, cache):
            sel = prox_op.jacobian_selection(cache["shifted"], theta)
            return constraint.dual_jacobian_matrix(sel, beta_next, theta, cache)

    jacobian_precond = None
    if use_ic_precond and hasattr(constraint, "dual_jacobian_precond"):
        def jacobian_precond(lam, cache):
            sel = prox_op.jacobian_selection(cache["shifted"], theta)
            return constraint.dual_jacobian_precond(sel, beta_next, theta, cache)

    return SsnSubproblem(
        dim=constraint.dual_dim,
        residual=residual,
        merit=merit,
        jacobian=jacobian,
        jacobian_matrix=jacobian_matrix,
        jacobian_precond=jacobian_precond,
    )


# -- residuals, Lyapunov, restart ------------------------------------------

def _matvec(A, x):
    if isinstance(A, CsrMatrix):
        return A.scipy() @ x
    if sp.issparse(A):
        return A @ x
    return np.asarray(A) @ x


def _matvec_t(A, lam):
    if isinstance(A, CsrMatrix):
        return A.scipy().T @ lam
    if sp.issparse(A):
        return A.T @ lam
    return np.asarray(A).T @ lam


def kkt_residual_l1l2(x, lam, A, b, rho) -> Tuple[float, float]:
    """Scaled optimality residuals of the sparse-recovery problem.

    Primal part: distance of ``x`` to the shrinkage of
    ``(1 - rho) x - A^T lam`` over ``1 + ||x||``; dual part: scaled
    constraint violation.
    """
    primal = x - soft_threshold((1.0 - rho) * x - _matvec_t(A, lam), 1.0)
    res_x = float(np.linalg.norm(primal)) / (1.0 + float(np.linalg.norm(x)))
    res_lam = float(np.linalg.norm(_matvec(A, x) - b)) / (1.0 + float(np.linalg.norm(b)))
    return res_x, res_lam


def kkt_residual_rof(u, p, lam, grad, xi, rho) -> Tuple[float, float, float]:
    """Scaled optimality residuals of the denoising problem.

    ``p`` and ``lam`` are stacked gradient-field vectors; the middle
    residual uses the unit-step group shrinkage.
    """
    res_u = float(np.linalg.norm(rho * (u - xi) - _matvec_t(grad, lam))) / (
        1.0 + float(np.linalg.norm(xi))
    )
    k = p.size // 2
    shifted = p - lam
    sp_, sq_ = prox_tv(shifted[:k], shifted[k:], 1.0)
    res_p = float(np.linalg.norm(p - np.concatenate([sp_, sq_]))) / (
        1.0 + float(np.linalg.norm(p))
    )
    res_lam = float(np.linalg.norm(p - _matvec(grad, u))) / (1.0 + float(np.linalg.norm(p)))
    return res_u, res_p, res_lam


def lyapunov(prob: ProblemInterface, s: SaddleState, p: ScalingParams, ref) -> float:
    """Energy combining the duality gap against a reference saddle point
    with gamma- and beta-weighted squared distances."""
    x_star, lam_star = ref
    resid_star = prob.constraint.apply(x_star) - prob.b
    gap = (prob.objective(s.x) + float(lam_star @ s.resid)) - (
        prob.objective(x_star) + float(s.lam @ resid_star)
    )
    dx = s.x - x_star
    dl = s.lam - lam_star
    return gap + 0.5 * p.beta * float(dl @ dl) + 0.5 * p.gamma * float(dx @ dx)


def restart_policy(history: Sequence[float], beta: float, threshold: float, k: int) -> bool:
    """True when the dual scaling has degenerated below ``threshold`` while
    the residual just increased."""
    if k < 1 or k >= len(history):
        raise ValueError("need residual records up to index k with k >= 1")
    return beta <= threshold and history[k] > history[k - 1]


# -- one outer step ---------------------------------------------------------

def _step_record(prob, state, params, alpha, report, xi, elapsed) -> IterRecord:
    res_x, res_lam, res_p = prob.kkt(state.x, state.newton_dual)
    drift = float(np.linalg.norm(state.lam - state.resid / params.beta - xi)) / (
        1.0 + float(np.linalg.norm(xi))
    )
    pcg_total = report.linear_iters_total
    return IterRecord(
        k=0,
        alpha=float(alpha),
        gamma=params.gamma,
        beta=params.beta,
        res_x=res_x,
        res_lambda=res_lam,
        res_p=res_p,
        feas=float(np.linalg.norm(state.resid)),
        lyapunov=None,
        xi_drift=drift,
        ssn_iters=report.iterations,
        pcg_avg=pcg_total / max(1, report.iterations),
        time_s=elapsed,
        pcg_total=pcg_total,
        flagged=report.flagged > 0 or not report.converged,
    )


def _solve_and_advance(prob, state, params, new_params, theta, base, ssn_cfg, warm, xi):
    z = new_params.beta * (state.lam - state.resid / params.beta) - prob.b
    use_ic = ssn_cfg.linear_solver == "pcg" and ssn_cfg.precond == "ic0"
    sub = make_dual_subproblem(
        prob.constraint, prob.nonsmooth, base, z, new_params.beta, theta, use_ic_precond=use_ic
    )
    start = warm if warm is not None else state.lam
    report = ssn_solve(sub, start, ssn_cfg)
    shifted = base - theta * prob.constraint.apply_t(report.solution)
    x_new = prob.nonsmooth.prox(shifted, theta)
    resid_new = prob.constraint.apply(x_new) - prob.b
    lam_new = xi + resid_new / new_params.beta
    return SaddleState(x_new, lam_new, resid_new, newton_dual=report.solution), report


def impd_step(
    prob: ProblemInterface,
    s: SaddleState,
    p: ScalingParams,
    alpha: float,
    ssn_cfg: SsnConfig,
    warm: Optional[np.ndarray] = None,
    conserved: Optional[np.ndarray] = None,
) -> Tuple[SaddleState, ScalingParams, IterRecord]:
    """One fully implicit iteration with step size ``alpha``.

    Updates the scalars first (the new beta enters the dual equation's
    constant term), solves the dual equation through the prox of the whole
    objective with primal step ``alpha / gamma``, then recovers the primal
    point and the eliminated dual iterate.
    """
    t0 = time.perf_counter()
    new_params = impd_param_update(p, alpha)
    theta = alpha / p.gamma
    xi = conserved if conserved is not None else s.lam - s.resid / p.beta
    new_state, report = _solve_and_advance(
        prob, s, p, new_params, theta, s.x, ssn_cfg, warm, xi
    )
    record = _step_record(prob, new_state, new_params, alpha, report, xi, time.perf_counter() - t0)
    return new_state, new_params, record


def semi_pdpg_step(
    prob: ProblemInterface,
    s: SaddleState,
    p: ScalingParams,
    ssn_cfg: SsnConfig,
    warm: Optional[np.ndarray] = None,
    conserved: Optional[np.ndarray] = None,
) -> Tuple[SaddleState, ScalingParams, IterRecord]:
    """One semi-implicit iteration; the step size comes from the quadratic law.

    Takes an explicit gradient step on the smooth block, then solves the
    dual equation through the prox of the remaining block with primal step
    ``alpha / gamma_next``.
    """
    if prob.smooth is None:
        raise ValueError("semi-implicit scheme needs a smooth block")
    t0 = time.perf_counter()
    alpha = semi_step_size(p)
    new_params = semi_param_update(p, alpha)
    assert abs(alpha * (p.lipschitz + new_params.gamma) - new_params.gamma) <= 1e-12 * (
        1.0 + p.lipschitz + new_params.gamma
    ), "step size must satisfy its defining relation"
    eta = alpha / new_params.gamma
    y = s.x - eta * prob.smooth.grad(s.x)
    xi = conserved if conserved is not None else s.lam - s.resid / p.beta
    new_state, report = _solve_and_advance(
        prob, s, p, new_params, eta, y, ssn_cfg, warm, xi
    )
    record = _step_record(prob, new_state, new_params, alpha, report, xi, time.perf_counter() - t0)
    return new_state, new_params, record


# -- drivers -----------------------------------------------------------------

@dataclass
class SolveResult:
    """Outcome of a full outer run.

    ``lam`` is the final Newton-solve dual (the point certified by the
    stopping test); ``state`` holds the eliminated iterate as well.
    """

    x: np.ndarray
    lam: np.ndarray
    converged: bool
    iterations: int
    final_residual: float
    records: List[IterRecord] = field(default_factory=list)
    restarts: int = 0
    time_s: float = 0.0
    state: Optional[SaddleState] = None
    initial_state: Optional[SaddleState] = None
    initial_params: Optional[ScalingParams] = None

    @property
    def ssn_total(self) -> int:
        return sum(r.ssn_iters for r in self.records)

    @property
    def pcg_total(self) -> int:
        return sum(r.pcg_total for r in self.records)


def run_flow(
    prob: ProblemInterface,
    state0: SaddleState,
    params0: ScalingParams,
    scheme: str,
    ssn_cfg: SsnConfig,
    tol: float = 1e-6,
    max_iters: int = 100000,
    alpha_fn: Optional[Callable[[int], float]] = None,
    restart_threshold: float = 1e-7,
    ref=None,
    csv_path: Optional[str] = None,
) -> SolveResult:
    """Drive either scheme to the KKT tolerance.

    The conserved vector is frozen from the initial iterate; restarts reset
    the scalars to their initial values, adopt the latest Newton dual, and
    rebase the conserved vector.
    """
    if scheme not in ("implicit", "semi"):
        raise ValueError("scheme must be 'implicit' or 'semi'")
    if scheme == "implicit" and alpha_fn is None:
        raise ValueError("implicit scheme needs an alpha schedule")
    t_start = time.perf_counter()
    state = SaddleState(
        np.asarray(state0.x, dtype=float).copy(),
        np.asarray(state0.lam, dtype=float).copy(),
        np.asarray(state0.resid, dtype=float).copy(),
        None if state0.newton_dual is None else np.asarray(state0.newton_dual, dtype=float).copy(),
    )
    params = params0
    xi = state.lam - state.resid / params.beta
    warm = state.lam if state.newton_dual is None else state.newton_dual

    parts0 = prob.kkt(state.x, state.lam)
    res = max(v for v in parts0 if v is not None)
    history = [res]
    records: List[IterRecord] = []
    restarts = 0
    converged = res <= tol
    k = 0

    while not converged and k < max_iters:
        k += 1
        if scheme == "implicit":
            state, params, record = impd_step(
                prob, state, params, alpha_fn(k - 1), ssn_cfg, warm=warm, conserved=xi
            )
        else:
            state, params, record = semi_pdpg_step(
                prob, state, params, ssn_cfg, warm=warm, conserved=xi
            )
        record.k = k
        if ref is not None:
            record.lyapunov = lyapunov(prob, state, params, ref)
        records.append(record)
        res = record.res_max
        history.append(res)
        warm = state.newton_dual
        if res <= tol:
            converged = True
            break
        if restart_policy(history, params.beta, restart_threshold, k):
            params = replace(params, gamma=params0.gamma, beta=params0.beta)
            state = SaddleState(state.x, state.newton_dual.copy(), state.resid, state.newton_dual)
            xi = state.lam - state.resid / params.beta
            restarts += 1

    if csv_path is not None:
        write_iter_csv(csv_path, records)
    final_lam = state.newton_dual if state.newton_dual is not None else state.lam
    return SolveResult(
        x=state.x,
        lam=final_lam,
        converged=converged,
        iterations=k,
        final_residual=res,
        records=records,
        restarts=restarts,
        time_s=time.perf_counter() - t_start,
        state=state,
        initial_state=state0,
        initial_params=params0,
    )


# -- problem factories and entry points --------------------------------------

def l1l2_problem(inst, split: bool = True, mu: Optional[float] = None) -> ProblemInterface:
    """Wrap a sparse-recovery instance for either scheme.

    ``split=True`` exposes the quadratic as the smooth block (gradient
    steps) and the l1 norm as the prox block; ``split=False`` folds both
    into a single prox-friendly block for the fully implicit scheme.
    ``mu`` overrides the convexity modulus credited to the smooth block.
    """
    rho = inst.rho
    A = inst.dense()
    constraint = DenseConstraint(A)

    def kkt(x, lam):
        res_x, res_lam = kkt_residual_l1l2(x, lam, A, inst.b, rho)
        return res_x, res_lam, None

    if split:
        smooth = SmoothPart(
            value=lambda x: 0.5 * rho * float(x @ x),
            grad=lambda x: rho * x,
            lipschitz=rho,
            modulus=rho if mu is None else float(mu),
        )
        return ProblemInterface(constraint, inst.b, L1Norm(), smooth, kkt)
    return ProblemInterface(constraint, inst.b, ElasticNet(rho), None, kkt)


def rof_problem(inst) -> ProblemInterface:
    """Wrap a denoising instance for the fully implicit scheme.

    The primal variable stacks the image with its gradient field; the
    constraint ties the field to the image's discrete gradient.
    """
    constraint = RofConstraint(inst.grad)
    xi = inst.xi
    b = np.zeros(constraint.dual_dim)

    def kkt(X, lam):
        u, p = constraint.split(X)
        res_u, res_p, res_lam = kkt_residual_rof(u, p, lam, inst.grad, xi, inst.rho)
        return res_u, res_lam, res_p

    return ProblemInterface(constraint, b, RofObjective(inst.rho, xi), None, kkt)


def default_init(prob: ProblemInterface, seed: int, mu: float, lipschitz: float):
    """Seeded starting point and scalars; returns the generator so callers
    can continue drawing (for example for random step sizes)."""
    rng = np.random.default_rng(seed)
    x0 = rng.standard_normal(prob.constraint.primal_dim)
    lam0 = rng.standard_normal(prob.constraint.dual_dim)
    gamma0 = mu + rng.uniform()
    beta0 = 1.0 + rng.uniform()
    resid0 = prob.constraint.apply(x0) - prob.b
    state = SaddleState(x0, lam0, resid0)
    params = ScalingParams(gamma0, beta0, mu=mu, lipschitz=lipschitz)
    return state, params, rng


def _default_ssn_direct() -> SsnConfig:
    return SsnConfig(linear_solver="direct", j_max=300)


def solve_l1l2_semi(
    inst,
    tol: float = 1e-6,
    max_iters: int = 100000,
    seed: int = 0,
    mu: Optional[float] = None,
    ssn_cfg: Optional[SsnConfig] = None,
    ref=None,
    csv_path: Optional[str] = None,
    restart_threshold: float = 1e-7,
    init: Optional[Tuple[SaddleState, ScalingParams]] = None,
) -> SolveResult:
    """Semi-implicit scheme on a sparse-recovery instance."""
    prob = l1l2_problem(inst, split=True, mu=mu)
    if init is None:
        state0, params0, _ = default_init(prob, seed, prob.smooth.modulus, prob.smooth.lipschitz)
    else:
        state0, params0 = init
    cfg = ssn_cfg or _default_ssn_direct()
    return run_flow(
        prob, state0, params0, "semi", cfg,
        tol=tol, max_iters=max_iters, restart_threshold=restart_threshold,
        ref=ref, csv_path=csv_path,
    )


def solve_l1l2_impd(
    inst,
    tol: float = 1e-6,
    max_iters: int = 100000,
    seed: int = 0,
    alpha_mode: str = "random",
    alpha_value: float = 1.5,
    ssn_cfg: Optional[SsnConfig] = None,
    ref=None,
    csv_path: Optional[str] = None,
    restart_threshold: float = 1e-7,
    init: Optional[Tuple[SaddleState, ScalingParams]] = None,
) -> SolveResult:
    """Fully implicit scheme on a sparse-recovery instance.

    ``alpha_mode='random'`` draws each step size as one plus a uniform
    sample; ``'fixed'`` uses ``alpha_value`` every iteration.
    """
    prob = l1l2_problem(inst, split=False)
    if init is None:
        state0, params0, rng = default_init(prob, seed, 0.0, 0.0)
    else:
        state0, params0 = init
        rng = np.random.default_rng(seed)
    if alpha_mode == "random":
        alpha_fn = lambda k: 1.0 + rng.uniform()
    elif alpha_mode == "fixed":
        alpha_fn = lambda k: alpha_value
    else:
        raise ValueError("alpha_mode must be 'random' or 'fixed'")
    cfg = ssn_cfg or _default_ssn_direct()
    return run_flow(
        prob, state0, params0, "implicit", cfg,
        tol=tol, max_iters=max_iters, alpha_fn=alpha_fn,
        restart_threshold=restart_threshold, ref=ref, csv_path=csv_path,
    )


def solve_rof_impd(
    inst,
    tol: float = 1e-6,
    max_iters: int = 100000,
    seed: int = 0,
    ssn_cfg: Optional[SsnConfig] = None,
    warm_steps: int = 3,
    beta0: float = 1.0,
    alpha_mode: str = "random",
    alpha_value: float = 1.5,
    ref=None,
    csv_path: Optional[str] = None,
    restart_threshold: float = 1e-7,
    init: Optional[Tuple[SaddleState, ScalingParams]] = None,
) -> SolveResult:
    """Fully implicit scheme on a denoising instance.

    Starts from a short run of the splitting baseline (``warm_steps``
    iterations) unless an initial state is supplied; with a zero modulus and
    equal initial scalars the primal step reduces to ``alpha / beta``.
    """
    prob = rof_problem(inst)
    if init is None:
        if warm_steps > 0:
            from .baselines import aadmm_warmup

            u0, p0, lam0 = aadmm_warmup(inst, warm_steps)
        else:
            u0 = inst.xi.copy()
            p0 = prob.constraint.grad @ u0
            lam0 = np.zeros(prob.constraint.dual_dim)
        x0 = np.concatenate([u0, p0])
        state0 = SaddleState(x0, lam0, prob.constraint.apply(x0) - prob.b)
        params0 = ScalingParams(beta0, beta0, mu=0.0, lipschitz=0.0)
    else:
        state0, params0 = init
    rng = np.random.default_rng(seed)
    if alpha_mode == "random":
        alpha_fn = lambda k: 1.0 + rng.uniform()
    elif alpha_mode == "fixed":
        alpha_fn = lambda k: alpha_value
    else:
        raise ValueError("alpha_mode must be 'random' or 'fixed'")
    cfg = ssn_cfg or SsnConfig(linear_solver="pcg", precond="ic0", j_max=50)
    return run_flow(
        prob, state0, params0, "implicit", cfg,
        tol=tol, max_iters=max_iters, alpha_fn=alpha_fn,
        restart_threshold=restart_threshold, ref=ref, csv_path=csv_path,
    )


def reference_saddle_l1l2(inst, seed: int = 0, tol: float = 1e-12, max_iters: int = 5000):
    """High-accuracy saddle point via the implicit scheme with direct solves."""
    cfg = SsnConfig(linear_solver="direct", j_max=300, residual_tol=1e-13)
    result = solve_l1l2_impd(inst, tol=tol, max_iters=max_iters, seed=seed, ssn_cfg=cfg)
    if not result.converged:
        raise RuntimeError("reference solve did not reach the requested accuracy")
    return result.x, result.lam


# -- CSV diagnostics ----------------------------------------------------------

def _fmt(value) -> str:
    if value is None:
        return ""
    return f"{value:.12g}"


def write_iter_csv(path: str, records: Sequence[IterRecord]) -> None:
    """Stream per-iteration diagnostics in the fixed column layout."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER.split(","))
        for r in records:
            writer.writerow(
                [
                    r.k,
                    _fmt(r.alpha),
                    _fmt(r.gamma),
                    _fmt(r.beta),
                    _fmt(r.res_x),
                    _fmt(r.res_lambda),
                    _fmt(r.res_p),
                    _fmt(r.feas),
                    _fmt(r.lyapunov),
                    _fmt(r.xi_drift),
                    r.ssn_iters,
                    _fmt(r.pcg_avg),
                    _fmt(r.time_s),
                ]
            )
