"""
Monotone coordinate transforms u = g(w) used to re-express v or theta.

Each transform knows g, its first two derivatives, log g' with its first two
derivatives (the Jacobian term added to log f(v)), the inverse, and how it
maps an interval. The catalogue is fixed: identity, log, logit.
"""

import math

import numpy as np
from scipy.special import expit, log_expit, logit

from hlikelihood.exceptions import NotApplicable
from hlikelihood.items import Interval


class Transform:
    name = None
    label = "custom"

    def forward(self, w):
        raise NotImplementedError

    def inverse(self, u):
        raise NotImplementedError

    def d1(self, w):
        raise NotImplementedError

    def d2(self, w):
        raise NotImplementedError

    def log_jac(self, w):
        raise NotImplementedError

    def dlog_jac(self, w):
        raise NotImplementedError

    def d2log_jac(self, w):
        raise NotImplementedError

    def map_interval(self, interval: Interval) -> Interval:
        with np.errstate(divide="ignore"):
            lo, hi = float(self.inverse(interval.lower)), float(self.inverse(interval.upper))
        return Interval(lower=min(lo, hi), upper=max(lo, hi))

    def __repr__(self):
        return f"{type(self).__name__}()"


class IdentityTransform(Transform):
    name = "identity"
    label = "natural"

    def forward(self, w):
        return np.asarray(w, dtype=float)

    def inverse(self, u):
        return np.asarray(u, dtype=float)

    def d1(self, w):
        return np.ones_like(np.asarray(w, dtype=float))

    def d2(self, w):
        return np.zeros_like(np.asarray(w, dtype=float))

    def log_jac(self, w):
        return np.zeros_like(np.asarray(w, dtype=float))

    dlog_jac = log_jac
    d2log_jac = log_jac

    def map_interval(self, interval):
        return interval


class LogTransform(Transform):
    """u = a + exp(w) for a support [a, inf)."""

    name = "log"
    label = "log"

    def __init__(self, shift: float = 0.0):
        self.shift = float(shift)

    def forward(self, w):
        return self.shift + np.exp(w)

    def inverse(self, u):
        return np.log(np.asarray(u, dtype=float) - self.shift)

    def d1(self, w):
        return np.exp(w)

    d2 = d1

    def log_jac(self, w):
        return np.asarray(w, dtype=float)

    def dlog_jac(self, w):
        return np.ones_like(np.asarray(w, dtype=float))

    def d2log_jac(self, w):
        return np.zeros_like(np.asarray(w, dtype=float))

    def __repr__(self):
        return f"LogTransform(shift={self.shift})"


class LogitTransform(Transform):
    """u = a + (b - a) * expit(w) for a support [a, b]."""

    name = "logit"

    def __init__(self, lower: float, upper: float):
        self.lower = float(lower)
        self.upper = float(upper)
        self.width = self.upper - self.lower

    def forward(self, w):
        return self.lower + self.width * expit(w)

    def inverse(self, u):
        return logit((np.asarray(u, dtype=float) - self.lower) / self.width)

    def d1(self, w):
        s = expit(w)
        return self.width * s * (1.0 - s)

    def d2(self, w):
        s = expit(w)
        return self.width * s * (1.0 - s) * (1.0 - 2.0 * s)

    def log_jac(self, w):
        w = np.asarray(w, dtype=float)
        return math.log(self.width) + log_expit(w) + log_expit(-w)

    def dlog_jac(self, w):
        return 1.0 - 2.0 * expit(w)

    def d2log_jac(self, w):
        s = expit(w)
        return -2.0 * s * (1.0 - s)

    def __repr__(self):
        return f"LogitTransform(lower={self.lower}, upper={self.upper})"


IDENTITY = IdentityTransform()

CATALOG = ("identity", "log", "logit")

_ALIASES = {"natural": "identity", "identity": "identity", "log": "log", "logit": "logit",
            "custom": "logit"}


def make_transform(name: str, support: Interval) -> Transform:
    """Build the named transform for one support axis.

    log needs a finite lower end and an infinite upper end; logit needs both
    ends finite. Anything else raises NotApplicable.
    """
    key = _ALIASES.get(name)
    if key is None:
        raise NotApplicable(f"unknown transform {name!r}; choose from {', '.join(CATALOG)}")
    if key == "identity":
        return IDENTITY
    lo_finite, hi_finite = math.isfinite(support.lower), math.isfinite(support.upper)
    if key == "log":
        if lo_finite and not hi_finite:
            return LogTransform(shift=support.lower)
        raise NotApplicable(f"log transform needs a support [a, inf), got [{support.lower}, {support.upper}]")
    if lo_finite and hi_finite:
        return LogitTransform(support.lower, support.upper)
    raise NotApplicable(f"logit transform needs a bounded support, got [{support.lower}, {support.upper}]")
