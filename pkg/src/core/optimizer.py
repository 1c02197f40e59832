"""
Optimizer Module
BFGS quasi-Newton ascent with a backtracking (Armijo) line search
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .errors import BadStartError, InvalidLikelihoodError, ModelError

logger = logging.getLogger(__name__)

ARMIJO_C1 = 1e-4
BACKTRACK = 0.5
MAX_BACKTRACKS = 40
MAX_STEP = 2.0


@dataclass
class AscentResult:
    """Outcome of a BFGS ascent run"""

    x: np.ndarray
    value: float
    grad: np.ndarray
    iterations: int
    converged: bool
    message: str
    trace: List[float] = field(default_factory=list)


def _safe_eval(func: Callable[[np.ndarray], float], x: np.ndarray) -> float:
    try:
        value = func(x)
    except (InvalidLikelihoodError, ModelError, FloatingPointError):
        return -np.inf
    return value if np.isfinite(value) else -np.inf


def _safe_grad(grad: Callable[[np.ndarray], np.ndarray], x: np.ndarray) -> Optional[np.ndarray]:
    try:
        g = np.asarray(grad(x), dtype=float)
    except (InvalidLikelihoodError, ModelError, FloatingPointError):
        return None
    return g if np.all(np.isfinite(g)) else None


def bfgs_maximize(func: Callable[[np.ndarray], float],
                  grad: Callable[[np.ndarray], np.ndarray],
                  x0: np.ndarray,
                  max_iterations: int = 500,
                  grad_tolerance: float = 1e-5,
                  rel_tolerance: float = 1e-9) -> AscentResult:
    """Maximize `func` from `x0`

    Converged means the gradient inf-norm fell below `grad_tolerance` or the
    relative change of the objective fell below `rel_tolerance`.  Accepted
    steps always satisfy the sufficient-increase condition, so the trace of
    objective values is nondecreasing.
    """
    x = np.asarray(x0, dtype=float).copy()
    value = _safe_eval(func, x)
    if not np.isfinite(value):
        raise BadStartError("objective is not finite at the starting point")
    g = _safe_grad(grad, x)
    if g is None:
        raise BadStartError("gradient is not finite at the starting point")
    n = x.size
    h_inv = np.eye(n)
    trace = [value]
    message = "iteration limit reached"
    converged = False
    iteration = 0

    while iteration < max_iterations:
        gnorm = float(np.max(np.abs(g))) if n else 0.0
        if gnorm < grad_tolerance:
            converged, message = True, "gradient below tolerance"
            break

        direction = h_inv @ g
        slope = float(g @ direction)
        if slope <= 0.0:
            h_inv = np.eye(n)
            direction = g.copy()
            slope = float(g @ direction)
        largest = float(np.max(np.abs(direction)))
        if largest > MAX_STEP:
            direction *= MAX_STEP / largest
            slope *= MAX_STEP / largest

        alpha = 1.0
        for _ in range(MAX_BACKTRACKS):
            candidate = x + alpha * direction
            new_value = _safe_eval(func, candidate)
            if new_value >= value + ARMIJO_C1 * alpha * slope:
                # a point whose gradient cannot be evaluated counts as a failed trial
                new_g = _safe_grad(grad, candidate)
                if new_g is not None:
                    break
            alpha *= BACKTRACK
        else:
            message = "line search could not increase the objective"
            break

        iteration += 1
        step = candidate - x
        change = abs(new_value - value) / max(abs(value), 1.0)
        # curvature pair of the minimization problem -f
        y = g - new_g
        sy = float(step @ y)
        x, g, value = candidate, new_g, new_value
        trace.append(value)
        logger.debug("iteration %d: loglik=%.6f |grad|=%.3e step=%.3g",
                     iteration, value, float(np.max(np.abs(g))), alpha)

        if sy > 1e-10:
            if iteration == 1:
                h_inv = np.eye(n) * (sy / float(y @ y))
            rho = 1.0 / sy
            left = np.eye(n) - rho * np.outer(step, y)
            h_inv = left @ h_inv @ left.T + rho * np.outer(step, step)

        if change < rel_tolerance:
            converged, message = True, "relative log-likelihood change below tolerance"
            break

    if not converged and iteration >= max_iterations:
        message = "iteration limit reached"
    return AscentResult(x=x, value=value, grad=g, iterations=iteration,
                        converged=converged, message=message, trace=trace)
