"""
Exponential sample with a future observation as the unobservable.

y_1..y_n and u = y_{n+1} are i.i.d. exponential with mean lambda. The model
comes in four registered variants: u on its natural scale or as v = log u,
and lambda on its natural scale or as eta = log lambda.
"""

import logging
import math

import numpy as np
from scipy import stats

from hlikelihood.exceptions import ConfigError, ImproperPosterior, NoInteriorMode, Unsupported
from hlikelihood.items import BoxDomain
from hlikelihood.models.base import JointModel

logger = logging.getLogger(__name__)

V_SCALES = {"natural_u": "natural", "natural": "natural", "log_u": "log", "log": "log"}
PARAM_SCALES = {"lambda": "natural", "natural": "natural",
                "log_lambda": "log", "log-lambda": "log", "log": "log"}

NAMES = {
    ("natural", "natural"): "exp-future",
    ("log", "natural"): "exp-future-log",
    ("log", "log"): "exp-future-log-eta",
    ("natural", "log"): "exp-future-eta",
}


def _lead(*arrays):
    return np.broadcast_shapes(*[np.shape(a) for a in arrays])


class ExponentialFuture(JointModel):
    """h(lambda, u) = -(n+1) log lambda - (U_n + u) / lambda on the natural scales."""

    name = "exp-future"
    theta_names = ("lambda",)
    v_names = ("u",)
    support_theta = BoxDomain.of((0.0, math.inf))
    audit_theta_range = (0.1, 10.0)

    _support_u = BoxDomain.of((0.0, math.inf))

    def support_v(self, theta=None):
        return self._support_u

    def log_cond(self, theta, v, y):
        lam = theta[..., 0]
        n = y.shape[-1]
        return -n * np.log(lam) - y.sum(axis=-1) / lam

    def log_marg_v(self, theta, v):
        lam = theta[..., 0]
        return -np.log(lam) - v[..., 0] / lam

    def cond_derivatives(self, theta, v, y):
        lam = theta[..., 0]
        n = y.shape[-1]
        s = y.sum(axis=-1)
        lead = _lead(lam, s, v[..., 0])
        grad = np.zeros(lead + (2,))
        hess = np.zeros(lead + (2, 2))
        grad[..., 0] = (s / lam - n) / lam
        hess[..., 0, 0] = (n - 2.0 * (s / lam)) / lam**2
        return grad, hess

    def marg_derivatives(self, theta, v):
        lam = theta[..., 0]
        u = v[..., 0]
        lead = _lead(lam, u)
        grad = np.zeros(lead + (2,))
        hess = np.zeros(lead + (2, 2))
        grad[..., 0] = (u / lam - 1.0) / lam
        grad[..., 1] = -1.0 / lam
        hess[..., 0, 0] = (1.0 - 2.0 * (u / lam)) / lam**2
        hess[..., 0, 1] = hess[..., 1, 0] = 1.0 / lam**2
        return grad, hess

    def sample_v(self, theta, size, rng):
        lam = float(np.asarray(theta, dtype=float).reshape(-1)[0])
        return rng.exponential(lam, size=(size, 1))

    def sample_y(self, theta, v, n, rng):
        lam = float(np.asarray(theta, dtype=float).reshape(-1)[0])
        return rng.exponential(lam, size=(len(v), n))

    def check_data(self, data):
        if min(data.observations) <= 0:
            raise Unsupported("exponential models need strictly positive observations")

    def default_init(self, data):
        return np.array([data.mean]), np.array([data.mean])

    def v_start(self, theta, data):
        # E[u | lambda] = lambda
        return np.asarray(theta, dtype=float)[..., :1].copy()


class ExponentialOracle:
    """Closed forms for one (v scale, lambda scale) variant."""

    pivot_label = "r"
    pivot_monotone = True

    def __init__(self, v_scale: str = "natural", param_scale: str = "natural"):
        self.v_scale = v_scale
        self.param_scale = param_scale

    def rescaled(self, param_scale: str) -> "ExponentialOracle":
        return ExponentialOracle(self.v_scale, param_scale)

    # scale bookkeeping

    def lam(self, theta):
        theta = np.asarray(theta, dtype=float)[..., 0]
        return np.exp(theta) if self.param_scale == "log" else theta

    def theta(self, lam):
        lam = np.asarray(lam, dtype=float)
        return (np.log(lam) if self.param_scale == "log" else lam)[..., None]

    def observation(self, v):
        v = np.asarray(v, dtype=float)
        return np.exp(v) if self.v_scale == "log" else v

    def from_observation(self, u):
        u = np.asarray(u, dtype=float)
        with np.errstate(divide="ignore"):
            return np.log(u) if self.v_scale == "log" else u

    # estimation

    def exact_mhle(self, data):
        if self.v_scale == "natural":
            raise NoInteriorMode("h increases towards u = 0 for every lambda; there is no interior mode")
        return self.theta(data.mean).reshape(1), np.array([math.log(data.mean)])

    def expected_hessian(self, theta, n: int) -> np.ndarray:
        lam = float(self.lam(theta))
        a = (n + 1) / lam**2 if self.param_scale == "natural" else float(n + 1)
        if self.v_scale == "log":
            cross = -1.0 / lam if self.param_scale == "natural" else -1.0
            return np.array([[a, cross], [cross, 1.0]])
        cross = -1.0 / lam**2 if self.param_scale == "natural" else -1.0 / lam
        return np.array([[a, cross], [cross, 0.0]])

    def profile_theta(self, v, data):
        u = self.observation(np.asarray(v, dtype=float)[..., 0])
        return self.theta((data.total + u) / (data.n + 1))

    def marginal_loglik(self, theta, data):
        lam = self.lam(theta)
        return -data.n * np.log(lam) - data.total / lam

    def sample_mean(self, theta, n, size, rng):
        """Sample means of n observations, drawn through Gamma(n, lambda) / n."""
        lam = float(self.lam(theta))
        return rng.gamma(n, lam, size=size) / n

    # prediction on r = n u / U_n

    def pivot(self, v, data):
        v = np.asarray(v, dtype=float)[..., 0]
        ratio = data.n / data.total
        r = ratio * self.observation(v)
        log_jac = math.log(ratio) + (v if self.v_scale == "log" else np.zeros_like(v))
        return r, log_jac

    def pivot_inverse(self, r, data):
        return self.from_observation(np.asarray(r, dtype=float) * data.total / data.n)

    def pivotal_law(self, n: int):
        return stats.lomax(c=n, scale=n)

    def posterior_law(self, n: int, prior: str):
        if prior == "flat_log_lambda":
            return stats.lomax(c=n, scale=n)
        if prior != "flat_lambda":
            raise ConfigError(f"unknown flat prior {prior!r}")
        if n < 2:
            raise ImproperPosterior("the flat-lambda posterior is improper when n = 1", n=n)
        return stats.lomax(c=n - 1, scale=n)

    def h_law(self, n: int):
        if self.param_scale == "log":
            return stats.lomax(c=n, scale=n)
        if n < 2:
            raise ImproperPosterior("the lambda-scale h-distribution is not normalizable when n = 1", n=n)
        return stats.lomax(c=n - 1, scale=n)


def exponential_future(scale: str = "log_u", param_scale: str = "lambda") -> JointModel:
    """Build one variant: scale in {natural_u, log_u}, param_scale in {lambda, log_lambda}."""
    try:
        v_scale = V_SCALES[scale]
        theta_scale = PARAM_SCALES[param_scale]
    except KeyError as exc:
        raise ConfigError(f"unknown exponential model scale {exc.args[0]!r}") from exc
    return ExponentialFuture().reparameterized(
        theta_scale=theta_scale,
        v_scale=v_scale,
        name=NAMES[(v_scale, theta_scale)],
        oracle=ExponentialOracle(v_scale, theta_scale),
        family=exponential_future,
    )
