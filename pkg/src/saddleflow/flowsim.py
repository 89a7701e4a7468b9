"""Continuous-time companion: integrate the damped saddle-point dynamics on
a small two-variable test problem and track its energy decay.

Two vector fields are available for the state ``(lam, x1, x2)`` with an
even power ``p > 2`` and exponential damping weights:

* ``original``: the multiplier moves with the constraint violation,
  ``lam' = e^t (x1 - x2)``, producing an oscillatory approach.
* ``modified``: the multiplier moves with the violation of the *updated*
  primal point, obtained by substituting the primal velocities into the
  constraint; this adds strong damping at the rate ``-2 e^{2t}`` near the
  saddle and removes the oscillation.

The classical fourth-order Runge-Kutta integrator optionally subdivides
each output step when a stiffness estimate says the step would leave the
stability region; the modified field needs this for horizons beyond about
``t = 4.8`` at the default output step.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

try:  # pragma: no cover - exercised when numba is installed
    from numba import njit as _njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False

    def _njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap

__all__ = [
    "ToySystem",
    "Trajectory",
    "BlowUpError",
    "toy_rhs",
    "toy_stiffness",
    "rk4_integrate",
    "integrate_toy",
    "linearization_matrix",
    "linearization_eigs",
    "lyapunov_continuous",
    "write_trajectory_csv",
]

_SQRT2 = math.sqrt(2.0)


class BlowUpError(RuntimeError):
    """Raised when the state stops being finite; carries the failure time."""

    def __init__(self, t: float):
        super().__init__(f"integration blew up at t = {t:.6g}")
        self.time = float(t)


@dataclass(frozen=True)
class ToySystem:
    """Two-variable test problem: objective ``(x1^p + x2^p) / p`` under the
    constraint ``x1 = x2``, with unit initial damping weights."""

    p: int
    variant: str = "original"

    def __post_init__(self):
        if self.p <= 2 or self.p % 2 != 0:
            raise ValueError("p must be an even integer greater than 2")
        if self.variant not in ("original", "modified"):
            raise ValueError("variant must be 'original' or 'modified'")


@dataclass
class Trajectory:
    """Sampled solution path; energy and error columns are filled for the
    test problem, left ``None`` for generic integrations."""

    times: np.ndarray
    states: np.ndarray
    lyapunov: Optional[np.ndarray] = None
    err_norm: Optional[np.ndarray] = None


def toy_rhs(sys: ToySystem, t: float, state: np.ndarray) -> np.ndarray:
    """Right-hand side at ``(t, state)`` with ``state = (lam, x1, x2)``.

    The modified variant substitutes the primal velocities into the
    multiplier equation in closed form.
    """
    lam, x1, x2 = float(state[0]), float(state[1]), float(state[2])
    et = math.exp(t)
    dx1 = -et * (x1 ** (sys.p - 1) + lam)
    dx2 = -et * (x2 ** (sys.p - 1) - lam)
    if sys.variant == "modified":
        dlam = et * (x1 + dx1 - x2 - dx2)
    else:
        dlam = et * (x1 - x2)
    return np.array([dlam, dx1, dx2])


def toy_stiffness(sys: ToySystem) -> Callable[[float], float]:
    """Largest local rate of the field linearized at the saddle.

    Original variant: the rotation rate ``sqrt(2) e^t``.  Modified variant:
    the magnitude of the strongly damped mode, about ``2 e^{2t}`` for large
    ``t``, floored by the rotation rate before the modes turn real.
    """
    if sys.variant == "original":
        return lambda t: _SQRT2 * math.exp(t)

    def rate(t: float) -> float:
        et = math.exp(t)
        real_part = et * (et + math.sqrt(max(et * et - 2.0, 0.0)))
        return max(_SQRT2 * et, real_part)

    return rate


def rk4_integrate(
    rhs: Callable[[float, np.ndarray], np.ndarray],
    z0: np.ndarray,
    t_end: float,
    h: float,
    stiffness: Optional[Callable[[float], float]] = None,
    max_rate: float = 2.5,
) -> Trajectory:
    """Classical fourth-order Runge-Kutta on a uniform output grid.

    When ``stiffness`` is given, each output step is subdivided so that the
    substep times the local rate stays below ``max_rate``, keeping the
    integrator inside its stability region without changing the grid.
    """
    if h <= 0 or t_end <= 0:
        raise ValueError("h and t_end must be positive")
    n_out = int(round(t_end / h))
    z = np.asarray(z0, dtype=float).copy()
    times = h * np.arange(n_out + 1)
    states = np.empty((n_out + 1, z.size))
    states[0] = z
    for i in range(n_out):
        t = times[i]
        n_sub = 1
        if stiffness is not None:
            n_sub = max(1, int(math.ceil(h * stiffness(t + h) / max_rate)))
        hs = h / n_sub
        for j in range(n_sub):
            ts = t + j * hs
            k1 = rhs(ts, z)
            k2 = rhs(ts + 0.5 * hs, z + 0.5 * hs * k1)
            k3 = rhs(ts + 0.5 * hs, z + 0.5 * hs * k2)
            k4 = rhs(ts + hs, z + hs * k3)
            z = z + (hs / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(z)):
            raise BlowUpError(times[i + 1])
        states[i + 1] = z
    return Trajectory(times, states)


@_njit(cache=True)
def _toy_kernel(z0, n_out, h, p, modified, max_rate):  # pragma: no cover - jitted
    out = np.empty((n_out + 1, 3))
    out[0, 0] = z0[0]
    out[0, 1] = z0[1]
    out[0, 2] = z0[2]
    lam, x1, x2 = z0[0], z0[1], z0[2]
    for i in range(n_out):
        t = i * h
        t_next = t + h
        et_next = math.exp(t_next)
        if modified:
            disc = et_next * et_next - 2.0
            if disc < 0.0:
                disc = 0.0
            rate = et_next * (et_next + math.sqrt(disc))
            floor = 1.4142135623730951 * et_next
            if floor > rate:
                rate = floor
        else:
            rate = 1.4142135623730951 * et_next
        n_sub = int(math.ceil(h * rate / max_rate))
        if n_sub < 1:
            n_sub = 1
        hs = h / n_sub
        for j in range(n_sub):
            ts = t + j * hs
            a_l, a_1, a_2 = _toy_rates(lam, x1, x2, ts, p, modified)
            b_l, b_1, b_2 = _toy_rates(
                lam + 0.5 * hs * a_l, x1 + 0.5 * hs * a_1, x2 + 0.5 * hs * a_2,
                ts + 0.5 * hs, p, modified,
            )
            c_l, c_1, c_2 = _toy_rates(
                lam + 0.5 * hs * b_l, x1 + 0.5 * hs * b_1, x2 + 0.5 * hs * b_2,
                ts + 0.5 * hs, p, modified,
            )
            d_l, d_1, d_2 = _toy_rates(
                lam + hs * c_l, x1 + hs * c_1, x2 + hs * c_2, ts + hs, p, modified
            )
            lam = lam + (hs / 6.0) * (a_l + 2.0 * b_l + 2.0 * c_l + d_l)
            x1 = x1 + (hs / 6.0) * (a_1 + 2.0 * b_1 + 2.0 * c_1 + d_1)
            x2 = x2 + (hs / 6.0) * (a_2 + 2.0 * b_2 + 2.0 * c_2 + d_2)
        if not (math.isfinite(lam) and math.isfinite(x1) and math.isfinite(x2)):
            return out, i + 1
        out[i + 1, 0] = lam
        out[i + 1, 1] = x1
        out[i + 1, 2] = x2
    return out, -1


@_njit(cache=True, inline="always")
def _toy_rates(lam, x1, x2, t, p, modified):  # pragma: no cover - jitted
    et = math.exp(t)
    f1 = x1 ** (p - 1)
    f2 = x2 ** (p - 1)
    dx1 = -et * (f1 + lam)
    dx2 = -et * (f2 - lam)
    if modified:
        dlam = et * (x1 + dx1 - x2 - dx2)
    else:
        dlam = et * (x1 - x2)
    return dlam, dx1, dx2


def integrate_toy(
    sys: ToySystem,
    z0: np.ndarray = None,
    t_end: float = 8.0,
    h: float = 1e-4,
    max_rate: float = 2.5,
) -> Trajectory:
    """Integrate the test problem and fill in energy and error columns.

    Uses a compiled kernel when available; otherwise the generic integrator
    with the variant's stiffness estimate.
    """
    if z0 is None:
        z0 = np.array([0.0, 1.0, -1.0])
    z0 = np.asarray(z0, dtype=float)
    n_out = int(round(t_end / h))
    if _HAVE_NUMBA:
        states, fail = _toy_kernel(
            z0, n_out, float(h), int(sys.p), sys.variant == "modified", float(max_rate)
        )
        if fail >= 0:
            raise BlowUpError(fail * h)
        times = h * np.arange(n_out + 1)
        traj = Trajectory(times, states)
    else:
        traj = rk4_integrate(
            lambda t, z: toy_rhs(sys, t, z), z0, t_end, h,
            stiffness=toy_stiffness(sys), max_rate=max_rate,
        )
    traj.lyapunov = np.array(
        [lyapunov_continuous(traj.states[i], traj.times[i], sys.p) for i in range(len(traj.times))]
    )
    traj.err_norm = np.linalg.norm(traj.states, axis=1)
    return traj


def linearization_matrix(variant: str, t: float = 0.0) -> np.ndarray:
    """Coefficient matrix of the field linearized at the saddle, with the
    common factor ``e^t`` pulled out: the state obeys ``z' = e^t M z``."""
    if variant == "original":
        return np.array([[0.0, 1.0, -1.0], [-1.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    if variant == "modified":
        return np.array(
            [[-2.0 * math.exp(t), 1.0, -1.0], [-1.0, 0.0, 0.0], [1.0, 0.0, 0.0]]
        )
    raise ValueError("variant must be 'original' or 'modified'")


def linearization_eigs(variant: str, t: float = 0.0) -> np.ndarray:
    """Closed-form eigenvalues of the pulled-out coefficient matrix.

    Original: ``0`` and ``+/- i sqrt(2)``, independent of ``t``.  Modified:
    ``0`` plus two real negative values once ``e^{2t} >= 2``; below that
    threshold the pair is complex and a domain error is raised.
    """
    if variant == "original":
        return np.array([0.0, -1j * _SQRT2, 1j * _SQRT2])
    if variant != "modified":
        raise ValueError("variant must be 'original' or 'modified'")
    et = math.exp(t)
    disc = et * et - 2.0
    if disc < 0.0:
        raise ValueError("modified-variant formulas require exp(2 t) >= 2")
    root = math.sqrt(disc)
    return np.array([0.0, -2.0 / (et + root), -et - root])


def lyapunov_continuous(state: np.ndarray, t: float, p: int) -> float:
    """Energy at the zero saddle: the objective plus the damped half square
    of the full state, with weight ``e^{-t}``."""
    lam, x1, x2 = float(state[0]), float(state[1]), float(state[2])
    objective = (x1 ** p + x2 ** p) / p
    return objective + math.exp(-t) * (x1 * x1 + x2 * x2 + lam * lam) / 2.0


def write_trajectory_csv(path: str, traj: Trajectory) -> None:
    """Stream a trajectory in the fixed column layout."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "lambda", "x1", "x2", "lyapunov", "err_norm"])
        n = len(traj.times)
        lyap = traj.lyapunov if traj.lyapunov is not None else [""] * n
        err = traj.err_norm if traj.err_norm is not None else [""] * n
        for i in range(n):
            row = [f"{traj.times[i]:.10g}"]
            row.extend(f"{traj.states[i, j]:.12g}" for j in range(traj.states.shape[1]))
            row.append("" if lyap[i] == "" else f"{lyap[i]:.12g}")
            row.append("" if err[i] == "" else f"{err[i]:.12g}")
            writer.writerow(row)
