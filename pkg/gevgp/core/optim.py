"""Quasi-Newton maximization with Armijo backtracking.

Small dense problems only (the outer hyperparameter vector has at most
five coordinates). The objective may return ``-inf`` for infeasible
points; the line search treats those as failed trial steps.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

logger = logging.getLogger(__name__)

Objective = Callable[[np.ndarray], float]
Gradient = Callable[[np.ndarray], np.ndarray]

ARMIJO_C = 1e-4
MAX_BACKTRACKS = 30
# A quasi-Newton step never moves a coordinate further than this.
MAX_STEP = 2.0
# Within this multiple of the tolerance a failed line search still counts as converged.
STALL_FACTOR = 100.0


@dataclass
class BfgsResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    iterations: int
    n_evals: int
    converged: bool
    stalled: bool
    message: str

    @property
    def grad_norm(self) -> float:
        return float(np.max(np.abs(self.grad))) if self.grad.size else 0.0


def central_gradient(
    fun: Objective,
    x: np.ndarray,
    rel_step: float = 1e-5,
    workers: int = 1,
) -> np.ndarray:
    """Central finite-difference gradient, step ``rel_step * (1 + |x_j|)``.

    A coordinate whose forward or backward point is infeasible falls back
    to the one-sided difference on the feasible side (zero if both fail).
    """
    x = np.asarray(x, dtype=float)
    steps = rel_step * (1.0 + np.abs(x))
    points = []
    for j in range(x.size):
        up, down = x.copy(), x.copy()
        up[j] += steps[j]
        down[j] -= steps[j]
        points.extend([up, down])

    if workers > 1 and len(points) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            values = list(pool.map(fun, points))
    else:
        values = [fun(p) for p in points]

    grad = np.zeros(x.size)
    center = None
    for j in range(x.size):
        f_up, f_down = values[2 * j], values[2 * j + 1]
        if math.isfinite(f_up) and math.isfinite(f_down):
            grad[j] = (f_up - f_down) / (2.0 * steps[j])
            continue
        if center is None:
            center = fun(x)
        if math.isfinite(f_up):
            grad[j] = (f_up - center) / steps[j]
        elif math.isfinite(f_down):
            grad[j] = (center - f_down) / steps[j]
        else:
            logger.warning(f"gradient coordinate {j} infeasible on both sides; using 0")
    return grad


def _armijo(fun: Objective, x: np.ndarray, f0: float, g0: np.ndarray, direction: np.ndarray):
    """Backtrack from the full step; returns (alpha, f) or (None, f0)."""
    slope = float(g0 @ direction)
    alpha = 1.0
    for _ in range(MAX_BACKTRACKS):
        f_new = fun(x + alpha * direction)
        if math.isfinite(f_new) and f_new >= f0 + ARMIJO_C * alpha * slope:
            return alpha, f_new
        alpha *= 0.5
    return None, f0


def bfgs_maximize(
    fun: Objective,
    x0: np.ndarray,
    grad: Gradient,
    tol: float = 1e-6,
    max_iter: int = 500,
    callback: Optional[Callable[[int, np.ndarray, float, np.ndarray], None]] = None,
) -> BfgsResult:
    """Maximize ``fun`` from ``x0``.

    Converged when ``max|grad| <= tol * (1 + |f|)``. ``callback(k, x, f, g)``
    runs after every accepted step.
    """
    x = np.asarray(x0, dtype=float).copy()
    n_evals = 0

    def counted(point):
        nonlocal n_evals
        n_evals += 1
        return fun(point)

    f = counted(x)
    if not math.isfinite(f):
        return BfgsResult(x, f, np.zeros_like(x), 0, n_evals, False, False,
                          "objective is not finite at the starting point")
    g = grad(x)
    n = x.size
    identity = np.eye(n)
    h_inv = identity / max(1.0, float(np.max(np.abs(g))))

    for k in range(max_iter):
        threshold = tol * (1.0 + abs(f))
        gnorm = float(np.max(np.abs(g)))
        if gnorm <= threshold:
            return BfgsResult(x, f, g, k, n_evals, True, False, "gradient tolerance reached")

        direction = h_inv @ g
        if float(g @ direction) <= 0.0:
            # lost ascent property; restart from steepest ascent
            h_inv = identity / max(1.0, gnorm)
            direction = h_inv @ g
        largest = float(np.max(np.abs(direction)))
        if largest > MAX_STEP:
            direction *= MAX_STEP / largest

        alpha, f_new = _armijo(counted, x, f, g, direction)
        if alpha is None and not np.allclose(h_inv, identity / max(1.0, gnorm)):
            h_inv = identity / max(1.0, gnorm)
            direction = h_inv @ g
            alpha, f_new = _armijo(counted, x, f, g, direction)
        if alpha is None:
            stalled = gnorm <= STALL_FACTOR * threshold
            message = "line search stalled near the optimum" if stalled else "line search failed"
            return BfgsResult(x, f, g, k, n_evals, stalled, stalled, message)

        step = alpha * direction
        x_new = x + step
        g_new = grad(x_new)
        # curvature pair for the maximization problem (minimizing -f)
        y = g - g_new
        sy = float(step @ y)
        if sy > 1e-12 * float(np.linalg.norm(step) * np.linalg.norm(y)):
            rho = 1.0 / sy
            a1 = identity - rho * np.outer(step, y)
            h_inv = a1 @ h_inv @ a1.T + rho * np.outer(step, step)
        x, f, g = x_new, f_new, g_new
        logger.debug(f"bfgs iter {k + 1}: f={f:.10g} |g|={float(np.max(np.abs(g))):.3g} alpha={alpha:.3g}")
        if callback is not None:
            callback(k + 1, x, f, g)

    threshold = tol * (1.0 + abs(f))
    gnorm = float(np.max(np.abs(g)))
    if gnorm <= threshold:
        return BfgsResult(x, f, g, max_iter, n_evals, True, False, "gradient tolerance reached")
    return BfgsResult(x, f, g, max_iter, n_evals, False, False, "iteration cap reached")
