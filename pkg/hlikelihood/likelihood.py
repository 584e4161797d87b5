"""
h-loglikelihood, marginal loglikelihood and its Laplace approximation.

h(theta, v; y) = log f_theta(y | v) + log f_theta(v). The marginal
loglikelihood integrates v out by quadrature; the Laplace version replaces
the integral by the inner mode and curvature in v.
"""

import logging
import math
from typing import Optional

import numpy as np

from hlikelihood import numeric, optimize
from hlikelihood.exceptions import (
    HessianNotNegDef,
    MaxIterations,
    NoInteriorMode,
    NonConvergent,
    OutOfSupport,
)
from hlikelihood.items import ObservedData, QuadratureSpec
from hlikelihood.models.base import JointModel

logger = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)


def as_vector(x) -> np.ndarray:
    if hasattr(x, "array"):
        x = x.array
    return np.atleast_1d(np.asarray(x, dtype=float))


def h_loglik(m: JointModel, data: ObservedData, theta, v) -> float:
    theta, v = as_vector(theta), as_vector(v)
    if not m.support_theta.contains(theta):
        raise OutOfSupport(f"theta={theta.tolist()} is outside the parameter domain of {m.name}")
    if not m.support_v(theta).contains(v):
        raise OutOfSupport(f"v={v.tolist()} is outside the support of v for {m.name}")
    with np.errstate(divide="ignore"):
        return float(m.h(theta, v, data.array))


def _h_in_v(m: JointModel, data: ObservedData, theta: np.ndarray):
    y = data.array
    support = m.support_v(theta)

    def logf(v):
        if not support.contains(v):
            return -math.inf
        with np.errstate(divide="ignore", invalid="ignore"):
            value = float(m.h(theta, v, y))
        return value if not math.isnan(value) else -math.inf

    return logf, support


def marginal_loglik(m: JointModel, data: ObservedData, theta, spec: Optional[QuadratureSpec] = None) -> float:
    """log of the integral of exp(h) over the support of v."""
    theta = as_vector(theta)
    if not m.support_theta.contains(theta):
        raise OutOfSupport(f"theta={theta.tolist()} is outside the parameter domain of {m.name}")
    logf, support = _h_in_v(m, data, theta)
    result = numeric.log_integrate(logf, support, spec)
    logger.debug(f"marginal loglik at theta={theta.tolist()}: {result.value:.10g} (rel err {result.error:.2g})")
    return result.value


def inner_mode(m: JointModel, data: ObservedData, theta):
    """Mode of h(theta, .; y) in v with the v-block of the Hessian there."""
    theta = as_vector(theta)
    y = data.array
    logf, support = _h_in_v(m, data, theta)
    p = m.p
    lower = np.array([axis.lower for axis in support.axes])
    upper = np.array([axis.upper for axis in support.axes])

    def derivs(v):
        grad, hess = m.h_derivatives(theta, v, y)
        return grad[p:], hess[p:, p:]

    v0 = np.clip(as_vector(m.v_start(theta, data)), lower, upper)
    result = optimize.maximize(logf, derivs, v0, lower, upper)
    if result.status == optimize.BOUNDARY:
        raise NoInteriorMode(f"h(theta, v) has no interior mode in v for {m.name} at theta={theta.tolist()}",
                             v=result.x.tolist())
    if result.status == optimize.MAX_ITER:
        raise MaxIterations(f"inner mode search did not converge in {result.iterations} iterations")
    if result.status in (optimize.STALLED, optimize.DIVERGED):
        raise NonConvergent(f"inner mode search stopped: {result.message}")
    return result


def laplace_marginal(m: JointModel, data: ObservedData, theta) -> float:
    """h(theta, v~; y) - 1/2 log det(-d2h/dv2) + (d/2) log 2 pi at the inner mode v~."""
    result = inner_mode(m, data, theta)
    neg = -result.hess
    try:
        chol = np.linalg.cholesky(neg)
    except np.linalg.LinAlgError:
        raise HessianNotNegDef(f"d2h/dv2 is not negative definite at the inner mode of {m.name}") from None
    log_det = 2.0 * float(np.sum(np.log(np.diag(chol))))
    return result.value - 0.5 * log_det + 0.5 * m.d * LOG_2PI


class HLogLik:
    """h-loglikelihood of one model bound to one data set."""

    def __init__(self, model: JointModel, data: ObservedData):
        model.check_data(data)
        self.model = model
        self.data = data

    def __call__(self, theta, v) -> float:
        return h_loglik(self.model, self.data, theta, v)

    def derivatives(self, theta, v):
        return self.model.h_derivatives(as_vector(theta), as_vector(v), self.data.array)

    def marginal(self, theta, spec: Optional[QuadratureSpec] = None) -> float:
        return marginal_loglik(self.model, self.data, theta, spec)

    def laplace(self, theta) -> float:
        return laplace_marginal(self.model, self.data, theta)
