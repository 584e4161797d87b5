"""
Joint models f_theta(y, v) = f_theta(y | v) f_theta(v).

A model is a bundle of pure evaluators. Arrays broadcast over leading axes:
theta has shape (..., p), v (..., d) and y (..., n). Derivatives are taken
with respect to phi = (theta, v) and come back as (grad (..., p+d),
hess (..., p+d, p+d)).

Built-in models supply analytic derivatives for the conditional and the
marginal-of-v parts separately; anything that returns None falls back to
central differences point by point.
"""

import logging
from typing import Optional

import numpy as np

from hlikelihood import numeric
from hlikelihood.items import BoxDomain, ObservedData
from hlikelihood.models.transforms import IDENTITY, make_transform

logger = logging.getLogger(__name__)


def _as_array(x) -> np.ndarray:
    if hasattr(x, "array"):
        x = x.array
    return np.asarray(x, dtype=float)


def _pointwise_fd(fun, p, theta, v, *extra):
    """Finite-difference (grad, hess) of fun(theta, v, *extra) over phi = (theta, v)."""
    theta, v = _as_array(theta), _as_array(v)
    extra = [np.asarray(e, dtype=float) for e in extra]
    lead = np.broadcast_shapes(theta.shape[:-1], v.shape[:-1], *[e.shape[:-1] for e in extra])
    theta_b = np.broadcast_to(theta, lead + theta.shape[-1:])
    v_b = np.broadcast_to(v, lead + v.shape[-1:])
    extra_b = [np.broadcast_to(e, lead + e.shape[-1:]) for e in extra]
    k = theta.shape[-1] + v.shape[-1]
    grad = np.empty(lead + (k,))
    hess = np.empty(lead + (k, k))
    for idx in np.ndindex(*lead):
        rest = [e[idx] for e in extra_b]

        def f(phi):
            return float(fun(phi[:p], phi[p:], *rest))

        phi0 = np.concatenate([theta_b[idx], v_b[idx]])
        grad[idx] = numeric.gradient(f, phi0)
        hess[idx] = numeric.hessian(f, phi0)
    return grad, hess


class JointModel:
    """Base class for joint models of observations y and unobservables v.

    Subclasses set the class attributes below and implement `log_cond`,
    `log_marg_v`, `support_v` and the two samplers.
    """

    name = None
    theta_names = ("theta",)
    v_names = ("v",)
    theta_scales = ("natural",)
    v_scale = "natural"
    support_theta = BoxDomain.of((-np.inf, np.inf))
    support_depends_on_theta = False

    # natural-scale theta range swept by audits and how to space it
    audit_theta_range = (0.1, 10.0)
    audit_theta_spacing = "log"

    oracle = None

    @property
    def p(self) -> int:
        return len(self.theta_names)

    @property
    def d(self) -> int:
        return len(self.v_names)

    @property
    def param_scale(self) -> str:
        return self.theta_scales[0]

    def __repr__(self):
        return f"<{type(self).__name__} {self.name!r}>"

    # evaluators ------------------------------------------------------------

    def support_v(self, theta=None) -> BoxDomain:
        raise NotImplementedError

    def log_cond(self, theta, v, y):
        """log f_theta(y | v), summed over the observations."""
        raise NotImplementedError

    def log_marg_v(self, theta, v):
        """log f_theta(v)."""
        raise NotImplementedError

    def cond_derivatives(self, theta, v, y):
        return None

    def marg_derivatives(self, theta, v):
        return None

    def sample_v(self, theta, size: int, rng: np.random.Generator) -> np.ndarray:
        """Draw `size` values of v given theta, shape (size, d)."""
        raise NotImplementedError

    def sample_y(self, theta, v, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw y given one row of v per replicate, shape (len(v), n)."""
        raise NotImplementedError

    def check_data(self, data: ObservedData) -> None:
        """Raise Unsupported when the observations fall outside the model's sample space."""

    def default_init(self, data: ObservedData):
        """Moment-type starting theta and v at its conditional mean given that theta."""
        raise NotImplementedError

    def v_start(self, theta, data: ObservedData) -> np.ndarray:
        return self.default_init(data)[1]

    def theta_natural(self, theta) -> np.ndarray:
        return _as_array(theta)

    def theta_from_natural(self, theta) -> np.ndarray:
        return _as_array(theta)

    def theta_log_jacobian(self, theta):
        """log |d theta_natural / d theta|, summed over coordinates."""
        return np.zeros(_as_array(theta).shape[:-1])

    # derived quantities -----------------------------------------------------

    def h(self, theta, v, y):
        theta, v, y = _as_array(theta), _as_array(v), _as_array(y)
        return self.log_cond(theta, v, y) + self.log_marg_v(theta, v)

    def in_support(self, theta, v) -> bool:
        theta, v = _as_array(theta), _as_array(v)
        if not self.support_theta.contains(theta):
            return False
        return self.support_v(theta).contains(v)

    def cond_grad_hess(self, theta, v, y):
        out = self.cond_derivatives(_as_array(theta), _as_array(v), _as_array(y))
        if out is None:
            out = _pointwise_fd(self.log_cond, self.p, theta, v, y)
        return out

    def marg_grad_hess(self, theta, v):
        out = self.marg_derivatives(_as_array(theta), _as_array(v))
        if out is None:
            out = _pointwise_fd(self.log_marg_v, self.p, theta, v)
        return out

    def h_derivatives(self, theta, v, y):
        """Gradient and Hessian of h over phi = (theta, v)."""
        gc, hc = self.cond_grad_hess(theta, v, y)
        gm, hm = self.marg_grad_hess(theta, v)
        return gc + gm, hc + hm

    def marginal_score(self, theta, v):
        """S_theta(v) = d log f_theta(v) / dv and its v-Jacobian."""
        grad, hess = self.marg_grad_hess(theta, v)
        p = self.p
        return grad[..., p:], hess[..., p:, p:]

    # reparameterization -----------------------------------------------------

    def reparameterized(self, theta_scale: str = "natural", v_scale: str = "natural",
                        name: Optional[str] = None, oracle=None, family=None) -> "ReparameterizedModel":
        """Re-express theta and v coordinatewise; the v-Jacobian enters log f(v) only."""
        theta_key = "log" if theta_scale == "log" else "identity"
        theta_transforms = [make_transform(theta_key, axis) for axis in self.support_theta.axes]
        v_transforms = [make_transform(v_scale, axis) for axis in self.support_v().axes]
        return ReparameterizedModel(self, theta_transforms, v_transforms,
                                    name=name, oracle=oracle, family=family)

    def with_param_scale(self, param_scale: str) -> "JointModel":
        if param_scale == self.param_scale:
            return self
        return self.reparameterized(theta_scale=param_scale, v_scale=self.v_scale)


class ReparameterizedModel(JointModel):
    """A base model seen through coordinatewise transforms of theta and v.

    With theta = g_t(a) and v = g_v(w), the chain rule gives
    grad_w = D grad and hess_w = D H D + diag(grad * D2), where D and D2
    hold the first and second transform derivatives. log |g_v'(w)| is added
    to the marginal part only.
    """

    def __init__(self, base: JointModel, theta_transforms, v_transforms,
                 name: Optional[str] = None, oracle=None, family=None):
        if isinstance(base, ReparameterizedModel):
            base = base.base
        if len(theta_transforms) != base.p or len(v_transforms) != base.d:
            raise ValueError("one transform per theta and per v coordinate")
        self.base = base
        self.theta_transforms = tuple(theta_transforms)
        self.v_transforms = tuple(v_transforms)
        self.name = name or base.name
        self.oracle = oracle
        self.family = family
        self.theta_names = base.theta_names
        self.v_names = base.v_names
        self.theta_scales = tuple("log" if t.name == "log" else s
                                  for t, s in zip(self.theta_transforms, base.theta_scales))
        labels = {t.label for t in self.v_transforms}
        self.v_scale = labels.pop() if len(labels) == 1 else "custom"
        self.support_depends_on_theta = base.support_depends_on_theta
        self.audit_theta_range = base.audit_theta_range
        self.audit_theta_spacing = base.audit_theta_spacing
        self.support_theta = BoxDomain(axes=[t.map_interval(axis) for t, axis
                                             in zip(self.theta_transforms, base.support_theta.axes)])

    @property
    def identity(self) -> bool:
        return all(t is IDENTITY for t in self.theta_transforms + self.v_transforms)

    @staticmethod
    def _apply(transforms, x, method):
        x = _as_array(x)
        return np.stack([getattr(t, method)(x[..., i]) for i, t in enumerate(transforms)], axis=-1)

    def _theta(self, theta):
        return self._apply(self.theta_transforms, theta, "forward")

    def _v(self, v):
        return self._apply(self.v_transforms, v, "forward")

    def support_v(self, theta=None):
        base_theta = None if theta is None else self._theta(theta)
        axes = self.base.support_v(base_theta).axes
        return BoxDomain(axes=[t.map_interval(axis) for t, axis in zip(self.v_transforms, axes)])

    def log_cond(self, theta, v, y):
        return self.base.log_cond(self._theta(theta), self._v(v), y)

    def log_marg_v(self, theta, v):
        jac = self._apply(self.v_transforms, v, "log_jac").sum(axis=-1)
        return self.base.log_marg_v(self._theta(theta), self._v(v)) + jac

    def _chain(self, out, theta, v, with_jacobian):
        if out is None:
            return None
        grad, hess = out
        theta, v = _as_array(theta), _as_array(v)
        point_lead = np.broadcast_shapes(theta.shape[:-1], v.shape[:-1])

        def stacked(method):
            a = np.broadcast_to(self._apply(self.theta_transforms, theta, method), point_lead + (self.p,))
            b = np.broadcast_to(self._apply(self.v_transforms, v, method), point_lead + (self.d,))
            return np.concatenate([a, b], axis=-1)

        d1, d2 = stacked("d1"), stacked("d2")
        lead = np.broadcast_shapes(grad.shape[:-1], d1.shape[:-1])
        grad = np.broadcast_to(grad, lead + grad.shape[-1:])
        hess = np.broadcast_to(hess, lead + hess.shape[-2:])
        d1 = np.broadcast_to(d1, lead + d1.shape[-1:])
        d2 = np.broadcast_to(d2, lead + d2.shape[-1:])

        new_grad = grad * d1
        new_hess = hess * d1[..., :, None] * d1[..., None, :]
        k = new_grad.shape[-1]
        diag = np.arange(k)
        new_hess[..., diag, diag] += grad * d2
        if with_jacobian:
            p = self.p
            w = np.broadcast_to(v, lead + v.shape[-1:])
            new_grad[..., p:] += self._apply(self.v_transforms, w, "dlog_jac")
            new_hess[..., diag[p:], diag[p:]] += self._apply(self.v_transforms, w, "d2log_jac")
        return new_grad, new_hess

    def cond_derivatives(self, theta, v, y):
        out = self.base.cond_derivatives(self._theta(theta), self._v(v), y)
        return self._chain(out, theta, v, with_jacobian=False)

    def marg_derivatives(self, theta, v):
        out = self.base.marg_derivatives(self._theta(theta), self._v(v))
        return self._chain(out, theta, v, with_jacobian=True)

    def sample_v(self, theta, size, rng):
        u = self.base.sample_v(self._theta(theta), size, rng)
        with np.errstate(divide="ignore"):
            return self._apply(self.v_transforms, u, "inverse")

    def sample_y(self, theta, v, n, rng):
        return self.base.sample_y(self._theta(theta), self._v(v), n, rng)

    def check_data(self, data):
        self.base.check_data(data)

    def default_init(self, data):
        theta0, v0 = self.base.default_init(data)
        return (self._apply(self.theta_transforms, theta0, "inverse"),
                self._apply(self.v_transforms, v0, "inverse"))

    def v_start(self, theta, data):
        return self._apply(self.v_transforms, self.base.v_start(self._theta(theta), data), "inverse")

    def theta_natural(self, theta):
        return self.base.theta_natural(self._theta(theta))

    def theta_from_natural(self, theta):
        return self._apply(self.theta_transforms, self.base.theta_from_natural(theta), "inverse")

    def theta_log_jacobian(self, theta):
        return self._apply(self.theta_transforms, theta, "log_jac").sum(axis=-1)

    def reparameterized(self, theta_scale="natural", v_scale="natural", name=None, oracle=None, family=None):
        return self.base.reparameterized(theta_scale, v_scale, name=name, oracle=oracle, family=family)

    def with_param_scale(self, param_scale):
        if param_scale == self.param_scale:
            return self
        if self.family is not None:
            return self.family(self.v_scale, param_scale)
        return self.reparameterized(theta_scale=param_scale, v_scale=self.v_scale)
