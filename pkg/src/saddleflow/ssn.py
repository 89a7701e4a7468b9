"""Semi-smooth Newton solver for the dual root-finding subproblems.

Each outer iteration of the implicit and semi-implicit schemes requires the
root of a piecewise-smooth monotone map

    F(lam) = beta * lam - B prox(base - theta * B^T lam) - z,

where ``B`` is the constraint operator and ``prox`` the resolvent of the
nonsmooth objective block.  ``F`` is the gradient of the strongly convex
merit

    M(lam) = (beta / 2) ||lam||^2 - <z, lam>
             + theta * f*(w) + ||prox(Y)||^2 / (2 theta),

with ``Y = base - theta B^T lam`` and ``w = (Y - prox(Y)) / theta``, so a
damped Newton iteration with an Armijo line search on ``M`` is globally
convergent.  Newton systems use one element of the generalized Jacobian

    J = beta I + theta * B T B^T,        T = a Jacobian selection of prox,

which is symmetric positive definite (J >= beta I), and are solved either
densely or by preconditioned conjugate gradients.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from .linalg import LinearOperator, Preconditioner, identity_precond, jacobi_precond, pcg

__all__ = ["SsnConfig", "SsnSubproblem", "SsnReport", "ssn_solve", "line_search", "newton_direction"]


@dataclass(frozen=True)
class SsnConfig:
    """Tuning knobs for the semi-smooth Newton loop.

    ``nu`` is the Armijo slope fraction, ``delta`` the backtracking factor,
    ``j_max`` the Newton iteration cap, ``r_max`` the backtracking cap per
    line search (on exhaustion the last trial step is taken and the
    iteration flagged), and ``residual_tol`` the absolute stopping level on
    ``||F||``.  ``linear_solver`` selects ``"direct"`` (dense Cholesky-style
    solve) or ``"pcg"``.
    """

    nu: float = 0.2
    delta: float = 0.9
    j_max: int = 10
    r_max: int = 50
    residual_tol: float = 1e-8
    linear_solver: str = "direct"
    pcg_rel_tol: float = 1e-8
    pcg_max_iter: int = 5000
    precond: str = "jacobi"

    def __post_init__(self):
        if not 0.0 < self.nu < 0.5:
            raise ValueError("nu must lie in (0, 0.5)")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if self.j_max < 1 or self.r_max < 1:
            raise ValueError("iteration caps must be at least 1")
        if self.residual_tol <= 0:
            raise ValueError("residual_tol must be positive")
        if self.linear_solver not in ("direct", "pcg"):
            raise ValueError("linear_solver must be 'direct' or 'pcg'")
        if self.precond not in ("none", "jacobi", "ic0"):
            raise ValueError("precond must be 'none', 'jacobi', or 'ic0'")


@dataclass
class SsnSubproblem:
    """One dual root-finding problem, supplied by the outer scheme.

    Callbacks:
      * ``residual(lam) -> (F, cache)``: the map value plus any cached
        quantities (typically the prox output) reused by the Jacobian.
      * ``merit(lam) -> float``: strongly convex merit whose gradient is the
        map; may return ``+inf`` for infeasible conjugate arguments.
      * ``jacobian(lam, cache) -> LinearOperator``: one generalized Jacobian
        at ``lam`` built from the cached prox output.
      * ``jacobian_matrix``: optional dense materialization for the direct
        linear solver.
      * ``jacobian_precond``: optional factory for a PCG preconditioner.
    """

    dim: int
    residual: Callable[[np.ndarray], Tuple[np.ndarray, object]]
    merit: Callable[[np.ndarray], float]
    jacobian: Callable[[np.ndarray, object], LinearOperator]
    jacobian_matrix: Optional[Callable[[np.ndarray, object], np.ndarray]] = None
    jacobian_precond: Optional[Callable[[np.ndarray, object], Preconditioner]] = None


@dataclass
class SsnReport:
    """Outcome of one Newton solve.

    ``history`` holds one ``(residual_norm, backtracks, linear_iters)`` row
    per Newton iteration; ``flagged`` counts iterations whose line search
    hit the backtracking cap without satisfying the Armijo test.
    """

    solution: np.ndarray
    converged: bool
    iterations: int
    residual_norm: float
    flagged: int = 0
    history: List[Tuple[float, int, int]] = field(default_factory=list)

    @property
    def linear_iters_total(self) -> int:
        return sum(int(h[2]) for h in self.history)


def newton_direction(
    sub: SsnSubproblem,
    lam: np.ndarray,
    cache: object,
    F: np.ndarray,
    config: SsnConfig,
) -> Tuple[np.ndarray, int]:
    """Solve ``J d = -F`` for the Newton direction; returns ``(d, lin_iters)``."""
    if config.linear_solver == "direct":
        if sub.jacobian_matrix is not None:
            J = sub.jacobian_matrix(lam, cache)
        else:
            op = sub.jacobian(lam, cache)
            J = np.column_stack([op.apply(e) for e in np.eye(sub.dim)])
        try:
            return np.linalg.solve(J, -F), 0
        except np.linalg.LinAlgError:
            # the system degenerates when the dual scaling underflows;
            # the minimum-norm direction keeps the line search well posed
            return np.linalg.lstsq(J, -F, rcond=None)[0], 0
    op = sub.jacobian(lam, cache)
    if sub.jacobian_precond is not None:
        M = sub.jacobian_precond(lam, cache)
    elif config.precond == "jacobi" and op.diagonal is not None:
        M = jacobi_precond(op.diagonal())
    else:
        M = identity_precond()
    d, iters, _ = pcg(op, -F, M=M, rel_tol=config.pcg_rel_tol, max_iter=config.pcg_max_iter)
    return d, iters


def line_search(
    merit: Callable[[np.ndarray], float],
    lam: np.ndarray,
    direction: np.ndarray,
    F: np.ndarray,
    config: SsnConfig,
) -> Tuple[float, int, bool]:
    """Armijo backtracking along a descent direction of the merit.

    Tries steps ``delta^r`` for ``r = 0..r_max`` and accepts the first with

        merit(lam + s d) <= merit(lam) + nu * s * <F, d>.

    Non-finite trial merits fail the test.  Returns ``(step, backtracks,
    flagged)``; a flagged result means the cap was reached and the last
    trial step is returned anyway.
    """
    m0 = merit(lam)
    slope = float(F @ direction)
    step = 1.0
    for r in range(config.r_max + 1):
        trial = merit(lam + step * direction)
        if np.isfinite(trial) and trial <= m0 + config.nu * step * slope:
            return step, r, False
        if r < config.r_max:
            step *= config.delta
    return step, config.r_max, True


def ssn_solve(
    sub: SsnSubproblem,
    lam0: np.ndarray,
    config: Optional[SsnConfig] = None,
) -> SsnReport:
    """Run the damped semi-smooth Newton iteration from ``lam0``."""
    config = config or SsnConfig()
    lam = np.asarray(lam0, dtype=float).copy()
    history: List[Tuple[float, int, int]] = []
    flagged = 0

    F, cache = sub.residual(lam)
    norm = float(np.linalg.norm(F))
    if norm <= config.residual_tol:
        return SsnReport(lam, True, 0, norm, 0, history)

    for j in range(1, config.j_max + 1):
        d, lin_iters = newton_direction(sub, lam, cache, F, config)
        step, backtracks, was_flagged = line_search(sub.merit, lam, d, F, config)
        if was_flagged:
            flagged += 1
        lam = lam + step * d
        F, cache = sub.residual(lam)
        norm = float(np.linalg.norm(F))
        history.append((norm, backtracks, lin_iters))
        if norm <= config.residual_tol:
            return SsnReport(lam, True, j, norm, flagged, history)

    return SsnReport(lam, False, config.j_max, norm, flagged, history)
