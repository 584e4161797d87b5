"""
Two-level exponential model with an exponential unobservable.

y_i | u ~ Exp(rate u) i.i.d. and u ~ Exp(rate theta). On the natural u scale
f_theta(0) = theta, so the density does not vanish on the boundary and the
h-likelihood fails the Bartlett identities for every theta; v = log u fixes it.
"""

import math

import numpy as np
from scipy.special import gammaln

from hlikelihood.exceptions import ConfigError, Diverged, Unsupported
from hlikelihood.items import BoxDomain
from hlikelihood.models.base import JointModel
from hlikelihood.models.exponential import PARAM_SCALES, V_SCALES


class BayarriExponential(JointModel):
    name = "bayarri"
    theta_names = ("theta",)
    v_names = ("u",)

    _support_u = BoxDomain.of((0.0, math.inf))

    def __init__(self, theta_domain=(0.0, math.inf)):
        lo, hi = float(theta_domain[0]), float(theta_domain[1])
        if lo < 0:
            raise ConfigError(f"theta is a rate and needs a domain inside (0, inf), got {theta_domain}")
        self.support_theta = BoxDomain.of((lo, hi))
        self.audit_theta_range = (lo if lo > 0 else 0.1, hi if math.isfinite(hi) else 10.0)

    def support_v(self, theta=None):
        return self._support_u

    def check_data(self, data):
        if min(data.observations) <= 0:
            raise Unsupported("the two-level exponential model needs strictly positive observations")

    def log_cond(self, theta, v, y):
        u = v[..., 0]
        n = y.shape[-1]
        with np.errstate(divide="ignore"):
            return n * np.log(u) - u * y.sum(axis=-1)

    def log_marg_v(self, theta, v):
        th = theta[..., 0]
        return np.log(th) - th * v[..., 0]

    def cond_derivatives(self, theta, v, y):
        u = v[..., 0]
        n = y.shape[-1]
        s = y.sum(axis=-1)
        lead = np.broadcast_shapes(np.shape(theta[..., 0]), np.shape(u), np.shape(s))
        grad = np.zeros(lead + (2,))
        hess = np.zeros(lead + (2, 2))
        grad[..., 1] = n / u - s
        hess[..., 1, 1] = -n / u**2
        return grad, hess

    def marg_derivatives(self, theta, v):
        th = theta[..., 0]
        u = v[..., 0]
        lead = np.broadcast_shapes(np.shape(th), np.shape(u))
        grad = np.zeros(lead + (2,))
        hess = np.zeros(lead + (2, 2))
        grad[..., 0] = 1.0 / th - u
        grad[..., 1] = -th
        hess[..., 0, 0] = -1.0 / th**2
        hess[..., 0, 1] = hess[..., 1, 0] = -1.0
        return grad, hess

    def sample_v(self, theta, size, rng):
        th = float(np.asarray(theta, dtype=float).reshape(-1)[0])
        return rng.exponential(1.0 / th, size=(size, 1))

    def sample_y(self, theta, v, n, rng):
        u = np.asarray(v, dtype=float)[:, :1]
        return rng.exponential(1.0 / u, size=(len(u), n))

    def default_init(self, data):
        return np.array([data.mean]), np.array([1.0 / data.mean])

    def v_start(self, theta, data):
        # E[u | theta] = 1 / theta
        return 1.0 / np.asarray(theta, dtype=float)[..., :1]


class BayarriOracle:
    """Closed forms on the natural theta scale; there is no predictive pivot."""

    pivot_label = None

    def __init__(self, v_scale: str = "natural"):
        self.v_scale = v_scale

    def observation(self, v):
        v = np.asarray(v, dtype=float)
        return np.exp(v) if self.v_scale == "log" else v

    def exact_mhle(self, data):
        if self.v_scale == "log":
            return np.array([data.mean]), np.array([-math.log(data.mean)])
        if data.n < 2:
            raise Diverged("with one observation h increases without bound as theta grows", n=data.n)
        return np.array([data.total / (data.n - 1)]), np.array([(data.n - 1) / data.total])

    def expected_hessian(self, theta, n):
        # on the natural u scale E[n / u^2] is infinite
        if self.v_scale != "log":
            return None
        th = float(np.asarray(theta, dtype=float).reshape(-1)[0])
        return np.array([[1.0 / th**2, 1.0 / th], [1.0 / th, n + 1.0]])

    def profile_theta(self, v, data):
        u = self.observation(np.asarray(v, dtype=float)[..., 0])
        return (1.0 / u)[..., None]

    def marginal_loglik(self, theta, data):
        th = np.asarray(theta, dtype=float)[..., 0]
        return np.log(th) + gammaln(data.n + 1) - (data.n + 1) * np.log(data.total + th)


def bayarri_marginal(theta_domain=(0.0, math.inf), v_scale: str = "natural",
                     param_scale: str = "natural") -> JointModel:
    try:
        v_key = V_SCALES[v_scale]
        theta_key = PARAM_SCALES[param_scale]
    except KeyError as exc:
        raise ConfigError(f"unknown scale {exc.args[0]!r}") from exc

    def family(v, p):
        return bayarri_marginal(theta_domain, v, p)

    name = "bayarri-log" if v_key == "log" else "bayarri"
    oracle = BayarriOracle(v_key) if theta_key == "natural" else None
    return BayarriExponential(theta_domain).reparameterized(
        theta_scale=theta_key, v_scale=v_key, name=name, oracle=oracle, family=family)
