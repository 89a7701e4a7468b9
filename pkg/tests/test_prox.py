"""Proximal-map tests against brute-force minimization oracles.

Every prox is validated independently: scalar maps against golden-section
line minimization, paired maps against a 2-D grid search with local
refinement, and conjugates against direct supremum evaluation.  Jacobian
selections are compared with finite differences away from kink sets.
"""

import numpy as np
import pytest
from scipy.optimize import minimize, minimize_scalar

from saddleflow.prox import (
    DiagonalJacobian,
    ElasticNet,
    L1Norm,
    RofObjective,
    TvBlockJacobian,
    TvNorm,
    ZeroFunction,
    box_project,
    group_shrink_factor,
    l1_conjugate_value,
    l1_jacobian,
    prox_tv,
    rof_prox,
    soft_threshold,
    tv_conjugate_value,
    tv_jacobian,
)


def scalar_prox_oracle(func, x: float, theta: float) -> float:
    """Golden-section minimization of ``func(y) + (y - x)^2 / (2 theta)``."""
    res = minimize_scalar(
        lambda y: func(y) + (y - x) ** 2 / (2.0 * theta),
        bracket=(x - 3.0 * abs(x) - 3.0, x, x + 3.0 * abs(x) + 3.0),
        method="golden",
        options={"xtol": 1e-12},
    )
    return float(res.x)


def pair_prox_oracle(p: float, q: float, theta: float):
    """Grid search plus local refinement for the paired-norm prox."""

    def objective(v):
        return np.hypot(v[0], v[1]) + ((v[0] - p) ** 2 + (v[1] - q) ** 2) / (2.0 * theta)

    radius = max(1.0, np.hypot(p, q))
    grid = np.linspace(-radius, radius, 201)
    aa, bb = np.meshgrid(grid, grid, indexing="ij")
    vals = np.hypot(aa, bb) + ((aa - p) ** 2 + (bb - q) ** 2) / (2.0 * theta)
    i, j = np.unravel_index(np.argmin(vals), vals.shape)
    res = minimize(
        objective,
        np.array([aa[i, j], bb[i, j]]),
        method="Nelder-Mead",
        options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 2000},
    )
    return res.x


class TestSoftThreshold:
    def test_formula_example(self):
        out = soft_threshold(np.array([2.5, -0.3, -1.7]), 1.0)
        np.testing.assert_allclose(out, [1.5, 0.0, -0.7], atol=1e-15)

    def test_zero_eta_is_identity(self):
        x = np.array([0.4, -2.0, 0.0])
        np.testing.assert_array_equal(soft_threshold(x, 0.0), x)

    def test_negative_eta_rejected(self):
        with pytest.raises(ValueError):
            soft_threshold(np.ones(2), -0.1)

    def test_matches_scalar_minimization(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal(8) * 2.0
        eta = 0.37
        out = soft_threshold(x, eta)
        for xi, oi in zip(x, out):
            assert oi == pytest.approx(scalar_prox_oracle(abs, xi, eta), abs=1e-6)


class TestL1Jacobian:
    def test_examples(self):
        np.testing.assert_array_equal(l1_jacobian(np.array([2.0, 0.5]), 1.0), [1.0, 0.0])
        np.testing.assert_array_equal(l1_jacobian(np.array([0.1, -0.2]), 0.5), [0.0, 0.0])

    def test_tie_takes_one(self):
        np.testing.assert_array_equal(l1_jacobian(np.array([1.0, -1.0]), 1.0), [1.0, 1.0])

    def test_nonpositive_eta_rejected(self):
        with pytest.raises(ValueError):
            l1_jacobian(np.ones(2), 0.0)

    def test_matches_finite_difference_slope(self):
        rng = np.random.default_rng(1)
        eta = 0.6
        x = rng.standard_normal(10)
        x = x[np.abs(np.abs(x) - eta) > 1e-3]
        h = 1e-7
        slope = (soft_threshold(x + h, eta) - soft_threshold(x - h, eta)) / (2.0 * h)
        np.testing.assert_allclose(l1_jacobian(x, eta), slope, atol=1e-6)


class TestBoxProject:
    def test_examples(self):
        np.testing.assert_array_equal(
            box_project(np.array([1.5, -2.0, 0.3])), [1.0, -1.0, 0.3]
        )
        inside = np.array([0.2, -0.9])
        np.testing.assert_array_equal(box_project(inside), inside)

    def test_moreau_identity_with_shrinkage(self):
        rng = np.random.default_rng(2)
        for _ in range(1000):
            x = rng.standard_normal(6) * 3.0
            eta = 10.0 ** rng.uniform(-2, 1)
            recon = soft_threshold(x, eta) + eta * box_project(x / eta)
            assert np.max(np.abs(recon - x)) <= 1e-12 * (1.0 + np.max(np.abs(x)))


class TestGroupShrink:
    def test_norm_five_example(self):
        assert group_shrink_factor(np.array([3.0]), np.array([4.0]), 1.0)[0] == pytest.approx(0.8)

    def test_inside_ball_gives_zero(self):
        assert group_shrink_factor(np.array([0.3]), np.array([0.4]), 1.0)[0] == 0.0

    def test_theta_zero_gives_ones(self):
        np.testing.assert_array_equal(
            group_shrink_factor(np.zeros(3), np.zeros(3), 0.0), np.ones(3)
        )

    def test_range(self):
        rng = np.random.default_rng(3)
        tau = group_shrink_factor(rng.standard_normal(50), rng.standard_normal(50), 0.7)
        assert np.all(tau >= 0.0) and np.all(tau < 1.0)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            group_shrink_factor(np.ones(2), np.ones(3), 1.0)

    def test_matches_two_dimensional_oracle(self):
        rng = np.random.default_rng(4)
        theta = 0.8
        for _ in range(8):
            p, q = rng.standard_normal(2) * 2.0
            got_p, got_q = prox_tv(np.array([p]), np.array([q]), theta)
            want = pair_prox_oracle(p, q, theta)
            assert got_p[0] == pytest.approx(want[0], abs=1e-5)
            assert got_q[0] == pytest.approx(want[1], abs=1e-5)


class TestProxTv:
    def test_example(self):
        p, q = prox_tv(np.array([3.0]), np.array([4.0]), 1.0)
        np.testing.assert_allclose([p[0], q[0]], [2.4, 3.2])

    def test_theta_zero_identity(self):
        p = np.array([0.1, -2.0])
        q = np.array([0.0, 1.0])
        pn, qn = prox_tv(p, q, 0.0)
        np.testing.assert_array_equal(pn, p)
        np.testing.assert_array_equal(qn, q)

    def test_firmly_nonexpansive(self):
        rng = np.random.default_rng(5)
        theta = 0.9
        for _ in range(100):
            x = rng.standard_normal(8)
            y = rng.standard_normal(8)
            px = np.concatenate(prox_tv(x[:4], x[4:], theta))
            py = np.concatenate(prox_tv(y[:4], y[4:], theta))
            d = px - py
            # firm nonexpansiveness implies the plain Lipschitz bound as well
            assert float(d @ d) <= float(d @ (x - y)) + 1e-12

    def test_moreau_identity_with_disk_projection(self):
        rng = np.random.default_rng(6)
        for _ in range(200):
            x = rng.standard_normal(6) * 2.0
            theta = 10.0 ** rng.uniform(-1.5, 0.5)
            p, q = x[:3], x[3:]
            pn, qn = prox_tv(p, q, theta)
            scale = np.minimum(1.0, 1.0 / np.maximum(np.hypot(p / theta, q / theta), 1e-300))
            proj_p, proj_q = (p / theta) * scale, (q / theta) * scale
            np.testing.assert_allclose(pn + theta * proj_p, p, atol=1e-12)
            np.testing.assert_allclose(qn + theta * proj_q, q, atol=1e-12)


class TestTvJacobian:
    def test_zero_block_inside_ball(self):
        t11, t12, t21, t22 = tv_jacobian(np.array([0.0]), np.array([0.0]), 1.0)
        assert t11[0] == t12[0] == t21[0] == t22[0] == 0.0

    def test_limit_is_identity(self):
        c = 1e8
        t11, t12, t21, t22 = tv_jacobian(np.array([0.6 * c]), np.array([0.8 * c]), 1.0)
        assert t11[0] == pytest.approx(1.0, abs=1e-6)
        assert t22[0] == pytest.approx(1.0, abs=1e-6)
        assert abs(t12[0]) <= 1e-6 and abs(t21[0]) <= 1e-6

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(7)
        theta = 0.7
        checked = 0
        while checked < 6:
            p, q = rng.standard_normal(2) * 2.0
            if abs(np.hypot(p, q) - theta) < 1e-2:
                continue
            checked += 1
            t11, t12, t21, t22 = tv_jacobian(np.array([p]), np.array([q]), theta)
            h = 1e-6

            def prox_pair(a, b):
                pa, pb = prox_tv(np.array([a]), np.array([b]), theta)
                return np.array([pa[0], pb[0]])

            col_a = (prox_pair(p + h, q) - prox_pair(p - h, q)) / (2.0 * h)
            col_b = (prox_pair(p, q + h) - prox_pair(p, q - h)) / (2.0 * h)
            np.testing.assert_allclose(
                [[t11[0], t12[0]], [t21[0], t22[0]]],
                np.column_stack([col_a, col_b]),
                atol=1e-5,
            )

    def test_blocks_symmetric_with_unit_interval_spectrum(self):
        rng = np.random.default_rng(8)
        p = rng.standard_normal(40) * 2.0
        q = rng.standard_normal(40) * 2.0
        t11, t12, t21, t22 = tv_jacobian(p, q, 0.5)
        np.testing.assert_array_equal(t12, t21)
        for i in range(40):
            eigs = np.linalg.eigvalsh(np.array([[t11[i], t12[i]], [t21[i], t22[i]]]))
            assert np.all(eigs >= -1e-12) and np.all(eigs <= 1.0 + 1e-12)

    def test_nonpositive_theta_rejected(self):
        with pytest.raises(ValueError):
            tv_jacobian(np.ones(1), np.ones(1), 0.0)


class TestRofProx:
    def test_fixed_point_at_observation(self):
        xi = np.array([1.0, -2.0, 3.0])
        u, p, q = rof_prox(xi, np.zeros(3), np.zeros(3), 0.5, 2.0, xi)
        np.testing.assert_allclose(u, xi)
        np.testing.assert_array_equal(p, np.zeros(3))

    def test_small_theta_limit_is_identity(self):
        rng = np.random.default_rng(9)
        u = rng.standard_normal(4)
        p = rng.standard_normal(4)
        q = rng.standard_normal(4)
        xi = rng.standard_normal(4)
        un, pn, qn = rof_prox(u, p, q, 1e-10, 3.0, xi)
        np.testing.assert_allclose(un, u, atol=1e-8)
        np.testing.assert_allclose(pn, p, atol=1e-8)
        np.testing.assert_allclose(qn, q, atol=1e-8)

    def test_matches_separable_oracles_on_three_pixels(self):
        rng = np.random.default_rng(10)
        theta, rho = 0.6, 1.7
        xi = rng.standard_normal(3)
        u = rng.standard_normal(3) * 2.0
        p = rng.standard_normal(3) * 2.0
        q = rng.standard_normal(3) * 2.0
        un, pn, qn = rof_prox(u, p, q, theta, rho, xi)
        for i in range(3):
            want_u = scalar_prox_oracle(lambda y: 0.5 * rho * (y - xi[i]) ** 2, u[i], theta)
            assert un[i] == pytest.approx(want_u, abs=1e-6)
            want_pq = pair_prox_oracle(p[i], q[i], theta)
            assert pn[i] == pytest.approx(want_pq[0], abs=1e-5)
            assert qn[i] == pytest.approx(want_pq[1], abs=1e-5)

    def test_invalid_parameters_rejected(self):
        with pytest.raises(ValueError):
            rof_prox(np.ones(2), np.ones(2), np.ones(2), 0.0, 1.0, np.ones(2))
        with pytest.raises(ValueError):
            rof_prox(np.ones(2), np.ones(2), np.ones(2), 1.0, -1.0, np.ones(2))


class TestConjugates:
    def test_l1_conjugate_indicator(self):
        assert l1_conjugate_value(np.array([0.5, -1.0])) == 0.0
        assert l1_conjugate_value(np.array([0.5, -1.1])) == np.inf

    def test_l1_conjugate_boundary_slack(self):
        assert l1_conjugate_value(np.array([1.0 + 1e-13])) == 0.0

    def test_tv_conjugate_indicator(self):
        assert tv_conjugate_value(np.array([0.6]), np.array([0.8])) == 0.0
        assert tv_conjugate_value(np.array([0.8]), np.array([0.8])) == np.inf

    def test_elastic_net_conjugate_matches_scalar_supremum(self):
        rho = 1.3
        g = ElasticNet(rho)
        rng = np.random.default_rng(11)
        y = rng.standard_normal(4) * 2.0
        grid = np.linspace(-20.0, 20.0, 400001)
        want = sum(
            float(np.max(yi * grid - 0.5 * rho * grid**2 - np.abs(grid))) for yi in y
        )
        assert g.conjugate_value(y) == pytest.approx(want, abs=1e-3)

    def test_rof_conjugate_matches_grid_supremum_on_two_pixels(self):
        rho = 2.0
        xi = np.array([0.7, -0.4])
        f = RofObjective(rho, xi)
        s = np.array([1.1, -0.6])
        lam_p = np.array([0.5, -0.3])
        lam_q = np.array([0.2, 0.6])
        got = f.conjugate_value(np.concatenate([s, lam_p, lam_q]))

        want = 0.0
        grid_u = np.linspace(-10.0, 10.0, 200001)
        for i in range(2):
            want += float(np.max(s[i] * grid_u - 0.5 * rho * (grid_u - xi[i]) ** 2))
        grid = np.linspace(-3.0, 3.0, 301)
        aa, bb = np.meshgrid(grid, grid, indexing="ij")
        for i in range(2):
            want += float(np.max(lam_p[i] * aa + lam_q[i] * bb - np.hypot(aa, bb)))
        assert got == pytest.approx(want, abs=1e-3)

    def test_rof_conjugate_infeasible_disks(self):
        f = RofObjective(1.0, np.zeros(2))
        Y = np.concatenate([np.zeros(2), np.array([1.2, 0.0]), np.array([0.0, 0.0])])
        assert f.conjugate_value(Y) == np.inf

    def test_zero_function_conjugate(self):
        z = ZeroFunction()
        assert z.conjugate_value(np.zeros(3)) == 0.0
        assert z.conjugate_value(np.array([0.1])) == np.inf


@pytest.mark.parametrize(
    "op,dim",
    [
        (L1Norm(), 6),
        (ElasticNet(0.8), 6),
        (TvNorm(), 8),
        (RofObjective(1.5, np.arange(3.0)), 9),
    ],
)
def test_prox_minimizes_its_objective(op, dim):
    rng = np.random.default_rng(12)
    theta = 0.7
    x = rng.standard_normal(dim) * 2.0
    px = op.prox(x, theta)
    best = op.value(px) + float((px - x) @ (px - x)) / (2.0 * theta)
    for _ in range(100):
        y = px + rng.standard_normal(dim) * rng.choice([0.01, 0.3, 2.0])
        candidate = op.value(y) + float((y - x) @ (y - x)) / (2.0 * theta)
        assert best <= candidate + 1e-10


@pytest.mark.parametrize(
    "op,dim",
    [
        (L1Norm(), 7),
        (ElasticNet(1.2), 7),
        (TvNorm(), 10),
        (RofObjective(2.0, np.arange(4.0)), 12),
        (ZeroFunction(), 5),
    ],
)
def test_prox_nonexpansive(op, dim):
    rng = np.random.default_rng(13)
    theta = 0.4
    for _ in range(50):
        x = rng.standard_normal(dim)
        y = rng.standard_normal(dim)
        dp = op.prox(x, theta) - op.prox(y, theta)
        assert np.linalg.norm(dp) <= np.linalg.norm(x - y) + 1e-12


def test_diagonal_jacobian_operator_round_trip():
    w = np.array([0.0, 0.5, 1.0])
    op = DiagonalJacobian(w).operator()
    v = np.array([2.0, 2.0, 2.0])
    np.testing.assert_array_equal(op.apply(v), w * v)
    np.testing.assert_array_equal(op.diagonal(), w)
    assert np.all(w >= 0.0) and np.all(w <= 1.0)


def test_jacobian_selections_have_unit_interval_spectrum():
    rng = np.random.default_rng(14)
    theta = 0.5
    x = rng.standard_normal(12) * 2.0

    diag_sel = L1Norm().jacobian_selection(x, theta)
    d = diag_sel.operator().diagonal()
    assert np.all((d >= 0.0) & (d <= 1.0))

    net_sel = ElasticNet(0.9).jacobian_selection(x, theta)
    d = net_sel.operator().diagonal()
    assert np.all((d >= 0.0) & (d <= 1.0))

    tv_sel = TvNorm().jacobian_selection(x, theta)
    M = np.column_stack([tv_sel.operator().apply(row) for row in np.eye(12)])
    np.testing.assert_allclose(M, M.T, atol=1e-14)
    eigs = np.linalg.eigvalsh(M)
    assert np.all(eigs >= -1e-12) and np.all(eigs <= 1.0 + 1e-12)


def test_rof_jacobian_operator_structure():
    rng = np.random.default_rng(15)
    xi = rng.standard_normal(3)
    f = RofObjective(2.5, xi)
    X = rng.standard_normal(9) * 2.0
    sel = f.jacobian_selection(X, 0.4)
    op = sel.operator()
    assert op.dim == 9
    M = np.column_stack([op.apply(row) for row in np.eye(9)])
    np.testing.assert_allclose(M, M.T, atol=1e-14)
    eigs = np.linalg.eigvalsh(M)
    assert np.all(eigs >= -1e-12) and np.all(eigs <= 1.0 + 1e-12)
    np.testing.assert_allclose(np.diag(M), op.diagonal(), atol=1e-14)
