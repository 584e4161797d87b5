"""
Safeguarded Newton ascent on a box.

Shared by the Laplace mode search, the MHLE solver and the theta profile.
The caller supplies the objective and its (gradient, Hessian); the routine
reports how it stopped instead of raising, so each caller can map the outcome
onto its own typed error or status.
"""

import logging
import math
from typing import Callable, NamedTuple, Optional

import numpy as np

from hlikelihood import settings

logger = logging.getLogger(__name__)

CONVERGED = "converged"
SADDLE = "saddle"
BOUNDARY = "boundary"
DIVERGED = "diverged"
STALLED = "stalled"
MAX_ITER = "max_iter"


class NewtonResult(NamedTuple):
    x: np.ndarray
    value: float
    grad: np.ndarray
    hess: np.ndarray
    iterations: int
    status: str
    message: str = ""


def _ascent_direction(grad, hess):
    """Newton direction when -H is PD, else the eigenvalue-modified one."""
    neg = -hess
    try:
        chol = np.linalg.cholesky(neg)
        return np.linalg.solve(chol.T, np.linalg.solve(chol, grad)), True
    except np.linalg.LinAlgError:
        pass
    eigval, eigvec = np.linalg.eigh(neg)
    floor = 1e-8 * max(1.0, float(np.max(np.abs(eigval))))
    eigval = np.maximum(np.abs(eigval), floor)
    return eigvec @ ((eigvec.T @ grad) / eigval), False


def maximize(fun: Callable, derivs: Callable, x0, lower, upper,
             diverged: Optional[Callable] = None,
             max_iter: int = settings.NEWTON_MAX_ITER,
             score_tol: float = settings.NEWTON_SCORE_TOL,
             step_tol: float = settings.NEWTON_STEP_TOL,
             max_halvings: int = settings.NEWTON_MAX_HALVINGS) -> NewtonResult:
    x = np.array(x0, dtype=float)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    value = float(fun(x))
    if not math.isfinite(value):
        raise ValueError(f"objective is not finite at the starting point {x.tolist()}")

    for iteration in range(1, max_iter + 1):
        grad, hess = derivs(x)
        direction, pd = _ascent_direction(grad, hess)
        score = float(np.max(np.abs(grad)))

        if score < score_tol and float(np.max(np.abs(direction))) < step_tol:
            status = CONVERGED if pd else SADDLE
            return NewtonResult(x, value, grad, hess, iteration, status)

        t = 1.0
        accepted = None
        for _ in range(max_halvings + 1):
            # projected step: clip onto the box, then test sufficient ascent
            cand = np.clip(x + t * direction, lower, upper)
            if np.array_equal(cand, x):
                break
            cand_value = float(fun(cand))
            slack = 1e-12 * max(1.0, abs(value))
            if math.isfinite(cand_value) and cand_value >= value + 1e-4 * float(grad @ (cand - x)) - slack:
                accepted = cand, cand_value
                break
            t *= 0.5

        if accepted is None:
            if score < score_tol:
                return NewtonResult(x, value, grad, hess, iteration, CONVERGED if pd else SADDLE,
                                    "line search exhausted at a near-stationary point")
            if _on_boundary(x, grad, lower, upper):
                return NewtonResult(x, value, grad, hess, iteration, BOUNDARY,
                                    "ascent direction leaves the support")
            return NewtonResult(x, value, grad, hess, iteration, STALLED, "line search exhausted")

        x, value = accepted
        logger.debug(f"newton iter {iteration}: h={value:.12g} |score|={score:.3g} step={t:.3g}")

        if diverged is not None and diverged(x):
            grad, hess = derivs(x)
            return NewtonResult(x, value, grad, hess, iteration, DIVERGED,
                                f"iterate exceeded {settings.DIVERGENCE_BOUND:g} on the natural scale")
        if _on_boundary(x, derivs(x)[0], lower, upper):
            grad, hess = derivs(x)
            return NewtonResult(x, value, grad, hess, iteration, BOUNDARY,
                                "maximum sits on the support boundary")

    grad, hess = derivs(x)
    return NewtonResult(x, value, grad, hess, max_iter, MAX_ITER)


def _on_boundary(x, grad, lower, upper) -> bool:
    tol = settings.BOUNDARY_TOL
    for xi, gi, lo, hi in zip(x, grad, lower, upper):
        if math.isfinite(lo) and xi - lo <= tol * max(1.0, abs(lo)) and gi < 0:
            return True
        if math.isfinite(hi) and hi - xi <= tol * max(1.0, abs(hi)) and gi > 0:
            return True
    return False
