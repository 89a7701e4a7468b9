"""Semi-smooth Newton solver tests.

The solver is exercised on hand-built subproblems where the root is known
in closed form, against a damped fixed-point oracle run to high accuracy,
and through behavioral checks: Armijo minimality, merit monotonicity,
superlinear tails, and flag bookkeeping on impossible line searches.
"""

import numpy as np
import pytest

from saddleflow.linalg import LinearOperator
from saddleflow.pdflow import DenseConstraint, make_dual_subproblem
from saddleflow.prox import L1Norm, TvNorm
from saddleflow.ssn import SsnConfig, SsnSubproblem, line_search, newton_direction, ssn_solve


def linear_subproblem(beta: float, z: np.ndarray) -> SsnSubproblem:
    """F(lam) = beta lam - z with quadratic merit; root z / beta."""

    def residual(lam):
        return beta * lam - z, {}

    def merit(lam):
        return 0.5 * beta * float(lam @ lam) - float(z @ lam)

    def jacobian(lam, cache):
        return LinearOperator(len(z), lambda v: beta * v, diagonal=lambda: np.full(len(z), beta))

    return SsnSubproblem(dim=len(z), residual=residual, merit=merit, jacobian=jacobian)


def random_l1l2_subproblem(seed: int, m: int = 2, n: int = 3, beta: float = 2.0, theta: float = 0.1):
    """Small dual subproblem with a contractive fixed-point oracle."""
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m, n))
    base = rng.standard_normal(n)
    z = rng.standard_normal(m)
    sub = make_dual_subproblem(DenseConstraint(A), L1Norm(), base, z, beta, theta)
    return sub, A, base, z


def fixed_point_oracle(A, base, z, beta, theta, damping=0.3, tol=1e-12, max_iter=200000):
    """Damped iteration lam <- lam + s (T(lam) - lam) with
    T(lam) = (A prox(base - theta A^T lam) + z) / beta."""
    from saddleflow.prox import soft_threshold

    lam = np.zeros(A.shape[0])
    for _ in range(max_iter):
        prox_val = soft_threshold(base - theta * (A.T @ lam), theta)
        target = (A @ prox_val + z) / beta
        new = lam + damping * (target - lam)
        if np.linalg.norm(new - lam) <= tol:
            return new
        lam = new
    raise AssertionError("fixed-point oracle did not converge")


class TestConfig:
    def test_defaults_valid(self):
        cfg = SsnConfig()
        assert cfg.nu == 0.2 and cfg.delta == 0.9
        assert cfg.j_max == 10 and cfg.r_max == 50
        assert cfg.residual_tol == 1e-8

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"nu": 0.0},
            {"nu": 0.5},
            {"delta": 0.0},
            {"delta": 1.0},
            {"j_max": 0},
            {"r_max": 0},
            {"residual_tol": 0.0},
            {"linear_solver": "lu"},
            {"precond": "ilu"},
        ],
    )
    def test_invalid_rejected(self, kwargs):
        with pytest.raises(ValueError):
            SsnConfig(**kwargs)


class TestSsnSolve:
    def test_linear_case_one_iteration(self):
        z = np.array([3.0, -1.0, 0.5])
        beta = 2.5
        report = ssn_solve(linear_subproblem(beta, z), np.zeros(3), SsnConfig())
        assert report.converged and report.iterations == 1
        np.testing.assert_allclose(report.solution, z / beta, rtol=1e-12)

    def test_already_solved_returns_zero_iterations(self):
        z = np.array([1.0, 2.0])
        report = ssn_solve(linear_subproblem(2.0, z), z / 2.0, SsnConfig())
        assert report.converged and report.iterations == 0

    def test_matches_fixed_point_oracle(self):
        sub, A, base, z = random_l1l2_subproblem(seed=0)
        beta, theta = 2.0, 0.1
        want = fixed_point_oracle(A, base, z, beta, theta)
        report = ssn_solve(sub, np.zeros(2), SsnConfig(residual_tol=1e-10))
        assert report.converged
        np.testing.assert_allclose(report.solution, want, atol=1e-7)

    def test_superlinear_tail(self):
        rng = np.random.default_rng(0)
        A = rng.standard_normal((6, 40))
        base = 5.0 * rng.standard_normal(40)
        z = 5.0 * rng.standard_normal(6)
        sub = make_dual_subproblem(DenseConstraint(A), L1Norm(), base, z, 0.4, 0.15)
        report = ssn_solve(
            sub, 30.0 * rng.standard_normal(6), SsnConfig(residual_tol=1e-13, j_max=40)
        )
        assert report.converged and len(report.history) >= 3
        norms = [h[0] for h in report.history]
        ratios = [norms[i + 1] / norms[i] for i in range(len(norms) - 1) if norms[i] > 0]
        assert len(ratios) >= 2 and all(r < 0.1 for r in ratios[-2:])

    def test_merit_monotone_across_accepted_steps(self):
        sub, A, base, z = random_l1l2_subproblem(seed=2, m=3, n=5, beta=0.8, theta=0.4)
        rng = np.random.default_rng(3)
        lam = 10.0 * rng.standard_normal(3)
        merits = [sub.merit(lam)]
        for _ in range(8):
            report = ssn_solve(sub, lam, SsnConfig(j_max=1, residual_tol=1e-300))
            lam = report.solution
            merits.append(sub.merit(lam))
        assert all(m1 <= m0 + 1e-12 for m0, m1 in zip(merits, merits[1:]))

    def test_flagged_when_line_search_cannot_succeed(self):
        # merit inconsistent with the residual: every Armijo test fails, the
        # cap is reached, the step is taken anyway and counted
        def residual(lam):
            return lam.copy(), {}

        def merit(lam):
            return 0.0

        def jacobian(lam, cache):
            return LinearOperator(2, lambda v: v, diagonal=lambda: np.ones(2))

        sub = SsnSubproblem(dim=2, residual=residual, merit=merit, jacobian=jacobian)
        report = ssn_solve(sub, np.array([1.0, 1.0]), SsnConfig(j_max=3, r_max=5))
        assert report.flagged >= 1
        assert all(h[1] == 5 for h in report.history)

    def test_newton_cap_reported_as_not_converged(self):
        sub, *_ = random_l1l2_subproblem(seed=4, beta=0.5, theta=0.8)
        report = ssn_solve(sub, 50.0 * np.ones(2), SsnConfig(j_max=1, residual_tol=1e-14))
        assert not report.converged and report.iterations == 1

    def test_history_rows_are_finite(self):
        sub, *_ = random_l1l2_subproblem(seed=5)
        report = ssn_solve(sub, np.ones(2), SsnConfig())
        assert all(np.isfinite(h[0]) for h in report.history)
        assert report.linear_iters_total == sum(h[2] for h in report.history)


class TestLineSearch:
    def test_full_step_accepted_on_quadratic(self):
        merit = lambda lam: 0.5 * float(lam @ lam)
        lam = np.array([1.0])
        d = np.array([-1.0])
        F = np.array([1.0])
        step, r, flagged = line_search(merit, lam, d, F, SsnConfig())
        assert step == 1.0 and r == 0 and not flagged

    def test_barrier_rejected_until_feasible(self):
        # +inf beyond 0.5 along the direction forces backtracking
        def merit(lam):
            if lam[0] < 0.45:
                return np.inf
            return 0.5 * float(lam @ lam)

        lam = np.array([1.0])
        d = np.array([-1.0])
        F = np.array([1.0])
        step, r, flagged = line_search(merit, lam, d, F, SsnConfig())
        assert not flagged and r > 0
        assert lam[0] + step * d[0] >= 0.45

    def test_returned_exponent_is_minimal(self):
        # overlong direction: the accepted exponent satisfies the Armijo
        # inequality while one fewer backtrack violates it
        merit = lambda lam: 0.5 * float(lam @ lam)
        lam = np.array([1.0])
        F = np.array([1.0])
        d = np.array([-3.0])
        cfg = SsnConfig()
        step, r, flagged = line_search(merit, lam, d, F, cfg)
        assert not flagged and r >= 1

        def armijo(s):
            return merit(lam + s * d) <= merit(lam) + cfg.nu * s * float(F @ d)

        assert armijo(step)
        assert not armijo(step / cfg.delta)

    def test_exhaustion_flags_and_returns_last_trial(self):
        merit = lambda lam: float(lam @ lam)  # inconsistent slope sign
        lam = np.array([0.0])
        d = np.array([1.0])
        F = np.array([1.0])
        cfg = SsnConfig(r_max=4)
        step, r, flagged = line_search(merit, lam, d, F, cfg)
        assert flagged and r == 4
        assert step == pytest.approx(cfg.delta**4)


class TestNewtonDirection:
    def test_identity_jacobian_returns_negative_residual(self):
        sub = linear_subproblem(1.0, np.zeros(3))
        F = np.array([1.0, -2.0, 0.5])
        d, lin_iters = newton_direction(sub, np.zeros(3), {}, F, SsnConfig())
        np.testing.assert_allclose(d, -F, atol=1e-14)
        assert lin_iters == 0

    def test_direct_and_pcg_agree(self):
        sub, A, base, z = random_l1l2_subproblem(seed=6, m=4, n=7, beta=1.2, theta=0.3)
        lam = np.array([0.3, -0.1, 0.7, 0.2])
        F, cache = sub.residual(lam)
        d_direct, _ = newton_direction(sub, lam, cache, F, SsnConfig(linear_solver="direct"))
        d_pcg, _ = newton_direction(
            sub, lam, cache, F, SsnConfig(linear_solver="pcg", pcg_rel_tol=1e-12)
        )
        np.testing.assert_allclose(d_pcg, d_direct, atol=1e-8)

    def test_jacobi_never_slower_than_identity(self):
        # widely spread diagonal: Jacobi scaling pays off
        diag = np.array([1.0, 10.0, 100.0, 1000.0])
        rng = np.random.default_rng(7)
        B = rng.standard_normal((4, 4)) * 0.1
        J = np.diag(diag) + B @ B.T

        def residual(lam):
            return J @ lam, {}

        def jacobian(lam, cache):
            return LinearOperator(4, lambda v: J @ v, diagonal=lambda: np.diag(J).copy())

        sub = SsnSubproblem(dim=4, residual=residual, merit=lambda lam: 0.0, jacobian=jacobian)
        F = np.array([1.0, 1.0, 1.0, 1.0])
        _, iters_jacobi = newton_direction(
            sub, np.zeros(4), {}, F, SsnConfig(linear_solver="pcg", precond="jacobi")
        )
        _, iters_plain = newton_direction(
            sub, np.zeros(4), {}, F, SsnConfig(linear_solver="pcg", precond="none")
        )
        assert iters_jacobi <= iters_plain


class TestSubproblemStructure:
    def test_merit_gradient_matches_residual(self):
        # shrinkage prox: the merit is piecewise quadratic, so central
        # differences are exact within pieces; check the directional match
        sub, A, base, z = random_l1l2_subproblem(seed=8, m=3, n=6, beta=1.1, theta=0.35)
        rng = np.random.default_rng(9)
        for _ in range(10):
            lam = rng.standard_normal(3)
            d = rng.standard_normal(3)
            d /= np.linalg.norm(d)
            F, _ = sub.residual(lam)
            slope = float(F @ d)
            h = 1e-5
            fd = (sub.merit(lam + h * d) - sub.merit(lam - h * d)) / (2.0 * h)
            assert fd == pytest.approx(slope, rel=1e-4, abs=1e-8)

    def test_merit_gradient_second_order_decay_on_group_norm(self):
        # the group shrinkage is genuinely nonlinear away from its threshold
        # circle, so the central-difference error decays like h^2
        rng = np.random.default_rng(3)
        A = rng.standard_normal((3, 8))
        base = 0.9 * rng.standard_normal(8)
        z = rng.standard_normal(3)
        theta = 0.35
        sub = make_dual_subproblem(DenseConstraint(A), TvNorm(), base, z, 1.1, theta)
        lam = 0.3 * rng.standard_normal(3)
        Y = base - theta * (A.T @ lam)
        assert np.min(np.abs(np.hypot(Y[:4], Y[4:]) - theta)) > 1e-2
        d = rng.standard_normal(3)
        d /= np.linalg.norm(d)
        F, _ = sub.residual(lam)
        slope = float(F @ d)
        errors = []
        for h in (1e-4, 1e-5):
            fd = (sub.merit(lam + h * d) - sub.merit(lam - h * d)) / (2.0 * h)
            errors.append(abs(fd - slope))
        assert errors[0] > 1e-11  # truncation above the round-off floor
        assert errors[1] <= errors[0] * 0.05

    def test_jacobian_spd_with_identity_shift_bound(self):
        sub, A, base, z = random_l1l2_subproblem(seed=10, m=4, n=8, beta=0.9, theta=0.6)
        rng = np.random.default_rng(11)
        lam = rng.standard_normal(4)
        F, cache = sub.residual(lam)
        op = sub.jacobian(lam, cache)
        for _ in range(20):
            v = rng.standard_normal(4)
            assert float(v @ op.apply(v)) >= 0.9 * float(v @ v) - 1e-12

    def test_jacobian_operator_matches_dense_matrix(self):
        sub, A, base, z = random_l1l2_subproblem(seed=12, m=3, n=7, beta=1.4, theta=0.25)
        lam = np.array([0.2, -0.4, 0.9])
        F, cache = sub.residual(lam)
        op = sub.jacobian(lam, cache)
        dense = sub.jacobian_matrix(lam, cache)
        M = np.column_stack([op.apply(e) for e in np.eye(3)])
        np.testing.assert_allclose(M, dense, atol=1e-12)
        np.testing.assert_allclose(op.diagonal(), np.diag(dense), atol=1e-12)
