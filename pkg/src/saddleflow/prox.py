"""Proximal mappings, Clarke-Jacobian selections, and conjugate values.

Covers the nonsmooth pieces used by the solvers: the vector l1 norm, the
isotropic group norm on stacked gradient-field pairs, the elastic-net sum
(quadratic plus l1, needed by the fully implicit scheme), and the separable
denoising objective combining a quadratic fidelity term with the group norm.

Infeasible conjugate arguments return ``+inf``; merit evaluations treat any
non-finite value as larger than every finite one.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .linalg import LinearOperator

__all__ = [
    "soft_threshold",
    "l1_jacobian",
    "box_project",
    "group_shrink_factor",
    "prox_tv",
    "tv_jacobian",
    "rof_prox",
    "l1_conjugate_value",
    "tv_conjugate_value",
    "DiagonalJacobian",
    "TvBlockJacobian",
    "RofJacobian",
    "ProxOperator",
    "L1Norm",
    "ElasticNet",
    "TvNorm",
    "RofObjective",
    "ZeroFunction",
]

# Indicator feasibility is checked with a tiny multiplicative slack so that
# points produced by the corresponding projections pass despite round-off.
_FEAS_SLACK = 1.0 + 1e-12


def soft_threshold(x: np.ndarray, eta: float) -> np.ndarray:
    """Componentwise shrinkage ``sgn(x) * max(|x| - eta, 0)``."""
    if eta < 0:
        raise ValueError("threshold must be nonnegative")
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.maximum(np.abs(x) - eta, 0.0)


def l1_jacobian(x: np.ndarray, eta: float) -> np.ndarray:
    """Diagonal of one generalized Jacobian of the shrinkage map.

    Entry ``i`` is 1 when ``|x_i| >= eta`` and 0 otherwise (ties take 1).
    """
    if eta <= 0:
        raise ValueError("threshold must be positive")
    return (np.abs(np.asarray(x, dtype=float)) >= eta).astype(float)


def box_project(x: np.ndarray) -> np.ndarray:
    """Componentwise clip to [-1, 1]."""
    return np.clip(np.asarray(x, dtype=float), -1.0, 1.0)


def group_shrink_factor(p: np.ndarray, q: np.ndarray, theta: float) -> np.ndarray:
    """Per-pair shrink factor ``1 - theta / max(theta, hypot(p_i, q_i))``.

    ``theta = 0`` returns all ones so that the induced prox is the identity.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError("paired components must have equal length")
    if theta < 0:
        raise ValueError("theta must be nonnegative")
    if theta == 0.0:
        return np.ones_like(p)
    norms = np.hypot(p, q)
    return 1.0 - theta / np.maximum(theta, norms)


def prox_tv(p: np.ndarray, q: np.ndarray, theta: float) -> Tuple[np.ndarray, np.ndarray]:
    """Group shrinkage of paired components: each 2-vector scaled by its factor."""
    tau = group_shrink_factor(p, q, theta)
    return p * tau, q * tau


def tv_jacobian(p: np.ndarray, q: np.ndarray, theta: float):
    """One generalized Jacobian of the group shrinkage, as four diagonal vectors.

    For each pair the 2x2 block is zero when ``hypot(p_i, q_i) < theta`` and
    otherwise ``tau I + ((1 - tau) / (p^2 + q^2)) [[p^2, pq], [pq, q^2]]``.
    Returns ``(t11, t12, t21, t22)``.
    """
    if theta <= 0:
        raise ValueError("theta must be positive")
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    norms = np.hypot(p, q)
    active = norms >= theta
    tau = group_shrink_factor(p, q, theta)
    t11 = np.zeros_like(p)
    t12 = np.zeros_like(p)
    t22 = np.zeros_like(p)
    if np.any(active):
        sq = norms[active] ** 2
        coef = (1.0 - tau[active]) / sq
        t11[active] = tau[active] + coef * p[active] ** 2
        t12[active] = coef * p[active] * q[active]
        t22[active] = tau[active] + coef * q[active] ** 2
    return t11, t12, t12.copy(), t22


def rof_prox(
    u: np.ndarray,
    p: np.ndarray,
    q: np.ndarray,
    theta: float,
    rho: float,
    xi: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Prox of the separable denoising objective at ``(u, p, q)``.

    The quadratic part averages toward the observed image, the group part
    shrinks the paired components.
    """
    if theta <= 0 or rho <= 0:
        raise ValueError("theta and rho must be positive")
    u_new = (np.asarray(u, dtype=float) + rho * theta * np.asarray(xi, dtype=float)) / (1.0 + rho * theta)
    p_new, q_new = prox_tv(p, q, theta)
    return u_new, p_new, q_new


def l1_conjugate_value(y: np.ndarray) -> float:
    """Conjugate of the l1 norm: indicator of the unit sup-norm cube."""
    y = np.asarray(y, dtype=float)
    if y.size and float(np.max(np.abs(y))) > _FEAS_SLACK:
        return np.inf
    return 0.0


def tv_conjugate_value(p: np.ndarray, q: np.ndarray) -> float:
    """Conjugate of the isotropic group norm: indicator of unit disks."""
    norms = np.hypot(np.asarray(p, dtype=float), np.asarray(q, dtype=float))
    if norms.size and float(np.max(norms)) > _FEAS_SLACK:
        return np.inf
    return 0.0


# -- Jacobian selections as structured operators ------------------------

@dataclass(frozen=True)
class DiagonalJacobian:
    """Diagonal selection ``diag(weights)`` with weights in [0, 1]."""

    weights: np.ndarray

    def operator(self) -> LinearOperator:
        w = self.weights
        return LinearOperator(len(w), lambda v: w * v, diagonal=lambda: w.copy())


@dataclass(frozen=True)
class TvBlockJacobian:
    """Block-diagonal selection with per-pair 2x2 blocks on stacked (p, q)."""

    t11: np.ndarray
    t12: np.ndarray
    t21: np.ndarray
    t22: np.ndarray

    def apply_pairs(self, a: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return self.t11 * a + self.t12 * b, self.t21 * a + self.t22 * b

    def operator(self) -> LinearOperator:
        k = len(self.t11)

        def mv(v):
            a, b = v[:k], v[k:]
            ra, rb = self.apply_pairs(a, b)
            return np.concatenate([ra, rb])

        return LinearOperator(2 * k, mv, diagonal=lambda: np.concatenate([self.t11, self.t22]))


@dataclass(frozen=True)
class RofJacobian:
    """Selection for the separable denoising objective: scaled identity on
    the image part, 2x2 blocks on the gradient-field part."""

    u_scale: float
    blocks: TvBlockJacobian
    n_u: int

    def operator(self) -> LinearOperator:
        k = len(self.blocks.t11)

        def mv(v):
            u, a, b = v[: self.n_u], v[self.n_u : self.n_u + k], v[self.n_u + k :]
            ra, rb = self.blocks.apply_pairs(a, b)
            return np.concatenate([self.u_scale * u, ra, rb])

        def diag():
            return np.concatenate(
                [np.full(self.n_u, self.u_scale), self.blocks.t11, self.blocks.t22]
            )

        return LinearOperator(self.n_u + 2 * k, mv, diagonal=diag)


# -- bundled operators ---------------------------------------------------

class ProxOperator:
    """A nonsmooth convex function bundled with its prox machinery.

    Subclasses provide: function value, prox evaluation, one element of the
    generalized Jacobian of the prox (as a structured selection), and the
    conjugate value at a given point.
    """

    def value(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def prox(self, x: np.ndarray, theta: float) -> np.ndarray:
        raise NotImplementedError

    def jacobian_selection(self, x: np.ndarray, theta: float):
        raise NotImplementedError

    def conjugate_value(self, y: np.ndarray) -> float:
        raise NotImplementedError


class L1Norm(ProxOperator):
    """The vector l1 norm."""

    def value(self, x):
        return float(np.sum(np.abs(x)))

    def prox(self, x, theta):
        return soft_threshold(x, theta)

    def jacobian_selection(self, x, theta):
        return DiagonalJacobian(l1_jacobian(x, theta))

    def conjugate_value(self, y):
        return l1_conjugate_value(y)


class ElasticNet(ProxOperator):
    """Quadratic plus l1: ``(rho / 2) ||x||^2 + ||x||_1``.

    Its prox is a shrinkage followed by uniform scaling, and its conjugate
    is the squared distance to the unit cube divided by ``2 rho``.
    """

    def __init__(self, rho: float):
        if rho <= 0:
            raise ValueError("rho must be positive")
        self.rho = float(rho)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return float(0.5 * self.rho * (x @ x) + np.sum(np.abs(x)))

    def prox(self, x, theta):
        return soft_threshold(x, theta) / (1.0 + self.rho * theta)

    def jacobian_selection(self, x, theta):
        return DiagonalJacobian(l1_jacobian(x, theta) / (1.0 + self.rho * theta))

    def conjugate_value(self, y):
        excess = soft_threshold(y, 1.0)
        return float(excess @ excess) / (2.0 * self.rho)


class TvNorm(ProxOperator):
    """Isotropic group norm on a stacked vector ``(p; q)`` of paired components."""

    @staticmethod
    def split(v: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        v = np.asarray(v, dtype=float)
        k = v.size // 2
        return v[:k], v[k:]

    def value(self, x):
        p, q = self.split(x)
        return float(np.sum(np.hypot(p, q)))

    def prox(self, x, theta):
        p, q = self.split(x)
        pn, qn = prox_tv(p, q, theta)
        return np.concatenate([pn, qn])

    def jacobian_selection(self, x, theta):
        p, q = self.split(x)
        return TvBlockJacobian(*tv_jacobian(p, q, theta))

    def conjugate_value(self, y):
        p, q = self.split(y)
        return tv_conjugate_value(p, q)


class RofObjective(ProxOperator):
    """Separable denoising objective on ``X = (u; p; q)``.

    Value ``(rho / 2) ||u - xi||^2 + sum_i hypot(p_i, q_i)`` with prox,
    Jacobian selection, and conjugate evaluated blockwise.
    """

    def __init__(self, rho: float, xi: np.ndarray):
        if rho <= 0:
            raise ValueError("rho must be positive")
        self.rho = float(rho)
        self.xi = np.asarray(xi, dtype=float)
        self.n_u = self.xi.size
        self._tv = TvNorm()

    def split(self, X: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        X = np.asarray(X, dtype=float)
        k = (X.size - self.n_u) // 2
        return X[: self.n_u], X[self.n_u : self.n_u + k], X[self.n_u + k :]

    def value(self, X):
        u, p, q = self.split(X)
        du = u - self.xi
        return float(0.5 * self.rho * (du @ du) + np.sum(np.hypot(p, q)))

    def prox(self, X, theta):
        u, p, q = self.split(X)
        un, pn, qn = rof_prox(u, p, q, theta, self.rho, self.xi)
        return np.concatenate([un, pn, qn])

    def jacobian_selection(self, X, theta):
        u, p, q = self.split(X)
        return RofJacobian(
            u_scale=1.0 / (1.0 + self.rho * theta),
            blocks=TvBlockJacobian(*tv_jacobian(p, q, theta)),
            n_u=self.n_u,
        )

    def conjugate_value(self, Y):
        s, p, q = self.split(Y)
        disk = tv_conjugate_value(p, q)
        if not np.isfinite(disk):
            return np.inf
        return float((s @ s) / (2.0 * self.rho) + s @ self.xi)


class ZeroFunction(ProxOperator):
    """The zero function; its prox is the identity."""

    def value(self, x):
        return 0.0

    def prox(self, x, theta):
        return np.asarray(x, dtype=float).copy()

    def jacobian_selection(self, x, theta):
        return DiagonalJacobian(np.ones(np.asarray(x).size))

    def conjugate_value(self, y):
        y = np.asarray(y, dtype=float)
        if y.size and float(np.max(np.abs(y))) > 1e-12:
            return np.inf
        return 0.0
