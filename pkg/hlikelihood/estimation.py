"""
Maximum h-likelihood estimation

Joint maximization of h over (theta, v), expected and observed Hessians,
the leading-term / remainder split of phi_hat - phi, and Monte Carlo
moments of the MHLE errors for the exponential case study.
"""

import logging
import math
from typing import Optional

import numpy as np
from scipy import linalg
from scipy import optimize as sp_optimize
from scipy.special import polygamma

from hlikelihood import numeric, optimize, settings
from hlikelihood.exceptions import (
    ConfigError,
    Diverged,
    HessianNotPD,
    HlikError,
    MaxIterations,
    NonConvergent,
    NotApplicable,
    OutOfSupport,
)
from hlikelihood.items import (
    HessianEstimate,
    MarginalFit,
    MhleSolution,
    ObservedData,
    ParameterVector,
    QuadratureSpec,
    RngStream,
    RTermDecomposition,
    SamplingMoments,
    UnobservableVector,
)
from hlikelihood.likelihood import as_vector, marginal_loglik
from hlikelihood.models.base import JointModel
from hlikelihood.models.transforms import make_transform

logger = logging.getLogger(__name__)

STATUS = {
    optimize.CONVERGED: "Converged",
    optimize.SADDLE: "HessianNotPD",
    optimize.BOUNDARY: "NoInteriorMode",
    optimize.DIVERGED: "Diverged",
}


def _objective(m: JointModel, y: np.ndarray):
    p = m.p

    def fun(phi):
        theta, v = phi[:p], phi[p:]
        if not m.in_support(theta, v):
            return -math.inf
        with np.errstate(all="ignore"):
            value = float(m.h(theta, v, y))
        return -math.inf if math.isnan(value) else value

    def derivs(phi):
        with np.errstate(all="ignore"):
            return m.h_derivatives(phi[:p], phi[p:], y)

    return fun, derivs


def _box(m: JointModel, theta) -> tuple[np.ndarray, np.ndarray]:
    axes = m.support_theta.axes + m.support_v(theta).axes
    return (np.array([axis.lower for axis in axes]), np.array([axis.upper for axis in axes]))


def inverse_information(info) -> tuple[Optional[np.ndarray], bool]:
    """Inverse of a symmetric information matrix and whether it is positive definite."""
    info = np.asarray(info, dtype=float)
    info = 0.5 * (info + info.T)
    try:
        factor = linalg.cho_factor(info)
    except linalg.LinAlgError:
        return None, False
    inverse = linalg.cho_solve(factor, np.eye(info.shape[0]))
    return 0.5 * (inverse + inverse.T), True


def expected_hessian(m: JointModel, theta, n: int, n_mc: Optional[int] = None,
                     stream: Optional[RngStream] = None) -> HessianEstimate:
    """E_theta[-d2h/dphi2] over joint (y, v) draws, or the model's closed form.

    The closed form is used when the model has one and `n_mc` is not given.
    """
    theta = as_vector(theta)
    if n_mc is None:
        closed = m.oracle.expected_hessian(theta, n) if m.oracle is not None else None
        if closed is not None:
            return HessianEstimate(matrix=np.asarray(closed).tolist(), method="closed-form",
                                   theta=theta.tolist(), n_obs=n)
        n_mc = settings.AUDIT_MC_DRAWS
    if stream is None:
        raise ConfigError("a Monte Carlo expected Hessian needs a seeded stream")

    def sampler(rng, size):
        v = m.sample_v(theta, size, rng)
        return v, m.sample_y(theta, v, n, rng)

    def neg_hessian(draws):
        v, y = draws
        with np.errstate(all="ignore"):
            _, hess = m.h_derivatives(theta, v, y)
        return -hess.reshape(len(v), -1)

    estimate = numeric.mc_expect(neg_hessian, sampler, n_mc, stream)
    k = m.p + m.d
    return HessianEstimate(
        matrix=estimate.mean.reshape(k, k).tolist(),
        se=estimate.se.reshape(k, k).tolist(),
        method="monte-carlo",
        theta=theta.tolist(),
        n_obs=n,
        n_mc=n_mc,
    )


def _runs_away(m: JointModel, data: ObservedData, theta0, theta) -> bool:
    """Whether an unfinished ascent is following h off to infinity in theta."""
    start = np.maximum(1.0, np.abs(m.theta_natural(theta0)))
    if np.any(np.abs(m.theta_natural(theta)) > settings.DIVERGENCE_GROWTH * start):
        return True
    exact = getattr(m.oracle, "exact_mhle", None)
    if exact is None:
        return False
    try:
        exact(data)
    except Diverged:
        return True
    except HlikError:
        return False
    return False


def solve_mhle(m: JointModel, data: ObservedData, init=None) -> MhleSolution:
    """Safeguarded Newton ascent on h from `init` (default: the model's moment start).

    Diverged, NoInteriorMode and HessianNotPD come back as the solution
    status. An ascent that runs out of iterations while theta runs away
    is Diverged; otherwise running out of iterations raises MaxIterations.
    """
    m.check_data(data)
    theta0, v0 = init if init is not None else m.default_init(data)
    theta0, v0 = as_vector(theta0), as_vector(v0)
    if not m.in_support(theta0, v0):
        raise OutOfSupport(f"starting point theta={theta0.tolist()} v={v0.tolist()} is outside the supports")
    p = m.p
    fun, derivs = _objective(m, data.array)
    lower, upper = _box(m, theta0)

    def diverged(phi):
        return bool(np.any(np.abs(m.theta_natural(phi[:p])) > settings.DIVERGENCE_BOUND))

    result = optimize.maximize(fun, derivs, np.concatenate([theta0, v0]), lower, upper, diverged=diverged)
    if result.status in (optimize.MAX_ITER, optimize.STALLED) and _runs_away(m, data, theta0, result.x[:p]):
        result = result._replace(status=optimize.DIVERGED,
                                 message=f"theta ran away from {theta0.tolist()} ({result.status})")
    if result.status == optimize.MAX_ITER:
        raise MaxIterations(f"MHLE for {m.name} did not converge in {result.iterations} iterations")
    if result.status == optimize.STALLED:
        raise NonConvergent(f"MHLE for {m.name} stalled: {result.message}", x=result.x.tolist())
    status = STATUS[result.status]

    theta_hat, v_hat = result.x[:p], result.x[p:]
    expected = inverse = pd = method = None
    if m.oracle is not None:
        closed = m.oracle.expected_hessian(theta_hat, data.n)
        if closed is not None:
            expected, method = np.asarray(closed), "closed-form"
            inverse, pd = inverse_information(expected)
            if not pd:
                logger.warning(f"expected Hessian of {m.name} at theta={theta_hat.tolist()} is not positive "
                               f"definite; no variance estimates")

    if status == "Converged":
        logger.info(f"MHLE for {m.name} converged in {result.iterations} iterations: "
                    f"theta={theta_hat.tolist()} v={v_hat.tolist()}")
    else:
        logger.warning(f"MHLE for {m.name} ended with status {status}: {result.message}")

    return MhleSolution(
        model=m.name,
        theta=ParameterVector(values=theta_hat.tolist(), scale_labels=list(m.theta_scales)),
        v=UnobservableVector(values=v_hat.tolist(), scale_label=m.v_scale),
        h_value=result.value,
        score=result.grad.tolist(),
        observed_hessian=(-result.hess).tolist(),
        expected_hessian=None if expected is None else expected.tolist(),
        expected_method=method,
        inverse_expected=None if inverse is None else inverse.tolist(),
        expected_pd=pd,
        status=status,
        iterations=result.iterations,
        message=result.message,
    )


def observed_vs_expected(m: JointModel, data: ObservedData, sol: MhleSolution, n_mc: Optional[int] = None,
                         stream: Optional[RngStream] = None) -> float:
    """Largest absolute entry of I_obs - I_h(theta_hat)."""
    if sol.expected_hessian is not None and n_mc is None:
        expected = np.asarray(sol.expected_hessian)
    else:
        expected = expected_hessian(m, sol.theta.array, data.n, n_mc, stream).array
    return float(np.max(np.abs(np.asarray(sol.observed_hessian) - expected)))


def r_term_decomposition(m: JointModel, data: ObservedData, v_true, sol: MhleSolution, theta_true=None,
                         n_mc: Optional[int] = None, stream: Optional[RngStream] = None) -> RTermDecomposition:
    """Split phi_hat - phi into I_h^{-1} S(phi; y) and the remainder R.

    I_h is evaluated at the true theta when it is supplied (simulations) and
    at theta_hat otherwise.
    """
    p = m.p
    point = "true_theta" if theta_true is not None else "theta_hat"
    theta = as_vector(theta_true) if theta_true is not None else sol.theta.array
    phi = np.concatenate([theta, as_vector(v_true)])
    info = expected_hessian(m, theta, data.n, n_mc, stream).array
    inverse, pd = inverse_information(info)
    if not pd:
        raise HessianNotPD(f"expected Hessian of {m.name} is not positive definite at theta={theta.tolist()}")
    with np.errstate(all="ignore"):
        grad, _ = m.h_derivatives(phi[:p], phi[p:], data.array)
    leading = inverse @ grad
    remainder = (sol.phi - phi) - leading
    return RTermDecomposition(phi_true=phi.tolist(), phi_hat=sol.phi.tolist(), leading=leading.tolist(),
                              remainder=remainder.tolist(), hessian_point=point)


def sampling_moments(m: JointModel, theta, n: int, n_mc: int, seed: int, jobs: int = 1) -> SamplingMoments:
    """Cov(theta_hat, v_hat - v) and V(v_hat - v) by Monte Carlo for the log-scale exponential model.

    Sample means are drawn as Gamma(n, lambda) / n; chunk k of the draws uses
    stream (seed, k).
    """
    oracle = m.oracle
    if oracle is None or not hasattr(oracle, "sample_mean") or m.v_scale != "log":
        raise NotApplicable(f"sampling moments need the log-scale exponential model, got {m.name}")
    theta = as_vector(m.theta_from_natural(theta))
    lam = float(oracle.lam(theta))

    def draw(rng, size):
        ybar = oracle.sample_mean(theta, n, size, rng)
        future = m.sample_v(theta, size, rng)[:, 0]
        return np.column_stack([ybar, np.log(ybar) - future])

    chunks = numeric.draw_chunked(draw, n_mc, seed=seed, jobs=jobs)
    draws = np.concatenate(chunks, axis=0)
    cov, cov_se = numeric.covariance_with_se(draws[:, 0], draws[:, 1])
    var, var_se = numeric.variance_with_se(draws[:, 1])
    tau2 = 1.0 + 1.0 / n
    return SamplingMoments(
        model=m.name,
        theta=[lam],
        n=n,
        n_mc=n_mc,
        seed=seed,
        cov_theta_v=cov,
        cov_theta_v_se=cov_se,
        cov_expected=lam / n,
        var_v=var,
        var_v_se=var_se,
        var_v_exact=float(polygamma(1, n)) + math.pi**2 / 6.0,
        tau2_v=tau2,
        excess=var - tau2,
        excess_se=var_se,
    )


def marginal_mle(m: JointModel, data: ObservedData, spec: Optional[QuadratureSpec] = None) -> MarginalFit:
    """Maximize the quadrature marginal loglikelihood over theta (Nelder-Mead, unconstrained coordinates)."""
    m.check_data(data)
    transforms = []
    for axis in m.support_theta.axes:
        for name in ("log", "logit", "identity"):
            try:
                transforms.append(make_transform(name, axis))
                break
            except NotApplicable:
                continue

    def to_theta(x):
        return np.array([t.forward(xi) for t, xi in zip(transforms, x)], dtype=float)

    def objective(x):
        theta = to_theta(x)
        if not m.support_theta.contains(theta):
            return math.inf
        return -marginal_loglik(m, data, theta, spec)

    theta0 = as_vector(m.default_init(data)[0])
    x0 = np.array([float(t.inverse(ti)) for t, ti in zip(transforms, theta0)])
    result = sp_optimize.minimize(objective, x0, method="Nelder-Mead",
                                  options={"xatol": 1e-9, "fatol": 1e-12, "maxiter": 2000})
    theta_hat = to_theta(result.x)
    logger.info(f"marginal MLE for {m.name}: theta={theta_hat.tolist()} loglik={-result.fun:.10g}")
    return MarginalFit(
        model=m.name,
        theta=ParameterVector(values=theta_hat.tolist(), scale_labels=list(m.theta_scales)),
        loglik=float(-result.fun),
        iterations=int(result.nit),
        converged=bool(result.success),
    )
