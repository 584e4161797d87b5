"""
Normal location model with a future observation as the unobservable.

y_1..y_n and v are i.i.d. N(mu, sigma^2) with sigma known. h is quadratic in
(mu, v), so the Laplace approximation is exact and the pivotal, flat-prior
posterior and h-distribution predictives all equal N(ybar, sigma^2 (1 + 1/n)).
"""

import math

import numpy as np
from scipy import stats

from hlikelihood.exceptions import ConfigError, NotApplicable, Unsupported
from hlikelihood.items import BoxDomain
from hlikelihood.models.base import JointModel

LOG_2PI = math.log(2.0 * math.pi)


class NormalFuture(JointModel):
    name = "normal-future"
    theta_names = ("mu",)
    v_names = ("v",)
    support_theta = BoxDomain.of((-math.inf, math.inf))
    audit_theta_range = (-2.0, 2.0)
    audit_theta_spacing = "linear"

    _support = BoxDomain.of((-math.inf, math.inf))

    def __init__(self, sigma: float = 1.0):
        if not sigma > 0:
            raise ConfigError(f"sigma must be positive, got {sigma}")
        self.sigma = float(sigma)

    def support_v(self, theta=None):
        return self._support

    def log_cond(self, theta, v, y):
        z = (y - theta[..., :1]) / self.sigma
        n = y.shape[-1]
        return -0.5 * np.sum(z * z, axis=-1) - n * (math.log(self.sigma) + 0.5 * LOG_2PI)

    def log_marg_v(self, theta, v):
        z = (v[..., 0] - theta[..., 0]) / self.sigma
        return -0.5 * z * z - math.log(self.sigma) - 0.5 * LOG_2PI

    def cond_derivatives(self, theta, v, y):
        mu = theta[..., 0]
        s2 = self.sigma**2
        n = y.shape[-1]
        resid = y.sum(axis=-1) - n * mu
        lead = np.broadcast_shapes(np.shape(resid), np.shape(v[..., 0]))
        grad = np.zeros(lead + (2,))
        hess = np.zeros(lead + (2, 2))
        grad[..., 0] = resid / s2
        hess[..., 0, 0] = -n / s2
        return grad, hess

    def marg_derivatives(self, theta, v):
        diff = v[..., 0] - theta[..., 0]
        s2 = self.sigma**2
        grad = np.zeros(np.shape(diff) + (2,))
        hess = np.zeros(np.shape(diff) + (2, 2))
        grad[..., 0] = diff / s2
        grad[..., 1] = -diff / s2
        hess[..., 0, 0] = hess[..., 1, 1] = -1.0 / s2
        hess[..., 0, 1] = hess[..., 1, 0] = 1.0 / s2
        return grad, hess

    def sample_v(self, theta, size, rng):
        mu = float(np.asarray(theta, dtype=float).reshape(-1)[0])
        return rng.normal(mu, self.sigma, size=(size, 1))

    def sample_y(self, theta, v, n, rng):
        mu = float(np.asarray(theta, dtype=float).reshape(-1)[0])
        return rng.normal(mu, self.sigma, size=(len(v), n))

    def default_init(self, data):
        return np.array([data.mean]), np.array([data.mean])

    def v_start(self, theta, data):
        return np.asarray(theta, dtype=float)[..., :1].copy()


class NormalOracle:
    pivot_label = "r"
    pivot_monotone = False

    def __init__(self, sigma: float = 1.0):
        self.sigma = float(sigma)
        self.param_scale = "natural"
        self.v_scale = "natural"

    def rescaled(self, param_scale):
        if param_scale != "natural":
            raise NotApplicable("mu ranges over the whole real line; a log scale does not apply")
        return self

    def observation(self, v):
        return np.asarray(v, dtype=float)

    from_observation = observation

    def exact_mhle(self, data):
        return np.array([data.mean]), np.array([data.mean])

    def expected_hessian(self, theta, n):
        s2 = self.sigma**2
        return np.array([[(n + 1) / s2, -1.0 / s2], [-1.0 / s2, 1.0 / s2]])

    def profile_theta(self, v, data):
        v = np.asarray(v, dtype=float)[..., 0]
        return ((data.total + v) / (data.n + 1))[..., None]

    def marginal_loglik(self, theta, data):
        mu = np.asarray(theta, dtype=float)[..., :1]
        return stats.norm.logpdf(data.array, loc=mu, scale=self.sigma).sum(axis=-1)

    def pivot(self, v, data):
        r = np.asarray(v, dtype=float)[..., 0] - data.mean
        return r, np.zeros_like(r)

    def pivot_inverse(self, r, data):
        return np.asarray(r, dtype=float) + data.mean

    def predictive_scale(self, n):
        return self.sigma * math.sqrt(1.0 + 1.0 / n)

    def pivotal_law(self, n):
        return stats.norm(loc=0.0, scale=self.predictive_scale(n))

    def posterior_law(self, n, prior):
        if prior != "flat_lambda":
            raise Unsupported("a flat prior on log mu is undefined; use the flat prior on mu")
        return self.pivotal_law(n)

    def h_law(self, n):
        return self.pivotal_law(n)


def normal_location_future(sigma: float = 1.0) -> JointModel:
    def family(v_scale, param_scale):
        if param_scale != "natural" or v_scale != "natural":
            raise NotApplicable("the normal model lives on the whole real line and has no log scale")
        return normal_location_future(sigma)

    return NormalFuture(sigma).reparameterized(
        name="normal-future", oracle=NormalOracle(sigma), family=family)
