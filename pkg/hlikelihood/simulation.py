"""
Monte Carlo experiments

Coverage of prediction intervals, the remainder term of the MHLE expansion,
the posterior/sampling variance decompositions and the parameter-scale
sensitivity of the predictive triple.

Every replicate of a coverage study draws from its own stream (seed, i);
moment studies draw fixed-size chunks from streams (seed, k). Results are
aggregated in index order, so they do not depend on the worker count.

Usage:
    cfg = ExperimentConfig(model="exp-future-log", n=10, alphas=[0.1], seed=1)
    result = run_coverage(cfg, jobs=4)
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Optional

import numpy as np
from scipy import stats
from scipy.special import polygamma

from hlikelihood import numeric, settings
from hlikelihood.estimation import inverse_information, solve_mhle
from hlikelihood.exceptions import HessianNotPD, ImproperPosterior, NotApplicable, Unsupported
from hlikelihood.items import (
    CoverageResult,
    CoverageRow,
    DualityResult,
    ExperimentConfig,
    HdpInterval,
    ObservedData,
    RngStream,
    RTermRow,
    RTermStudy,
    ScaleRow,
)
from hlikelihood.likelihood import as_vector
from hlikelihood.models import get_model
from hlikelihood.models.base import JointModel
from hlikelihood.prediction import compare_triple, h_distribution, hdp_interval, pivot_grid

logger = logging.getLogger(__name__)

EULER_GAMMA = float(np.euler_gamma)
PI2_6 = math.pi**2 / 6.0

PIVOT_METHODS = ("aphl", "pivotal", "posterior-flat")


def _replicate(m: JointModel, theta: np.ndarray, n: int, seed: int, i: int):
    rng = RngStream(seed=seed, stream_id=i).generator()
    v = m.sample_v(theta, 1, rng)
    y = m.sample_y(theta, v, n, rng)
    return v[0], ObservedData.of(y[0])


def _pivot_interval(m: JointModel, method: str, n: int, alpha: float, prior: str) -> HdpInterval:
    """The 1 - alpha HDP set on the pivot scale; data-free by pivot equivariance."""
    oracle = m.oracle
    if oracle is None or getattr(oracle, "pivot_label", None) is None:
        raise Unsupported(f"coverage method {method} needs a predictive pivot; {m.name} has none")
    if method == "pivotal":
        return hdp_interval(oracle.pivotal_law(n), alpha)
    if method == "posterior-flat":
        return hdp_interval(oracle.posterior_law(n, prior), alpha)
    canonical = ObservedData.of(np.ones(n))
    grid = h_distribution(m, canonical)
    return hdp_interval(pivot_grid(grid, m, canonical), alpha, masses=grid.cell_masses())


def _observed(m: JointModel, v):
    v = np.asarray(v, dtype=float)
    if m.oracle is None or not hasattr(m.oracle, "observation"):
        return v
    return m.oracle.observation(v)


def _hessian_normal(m: JointModel, data: ObservedData, alphas) -> list[tuple[float, float]]:
    """v_hat +- z sqrt(tau2) with tau2 the v entry of the inverse expected Hessian at theta_hat."""
    oracle = m.oracle
    if oracle is not None and hasattr(oracle, "exact_mhle"):
        theta_hat, v_hat = oracle.exact_mhle(data)
    else:
        sol = solve_mhle(m, data)
        theta_hat, v_hat = sol.theta.array, sol.v.array
    closed = oracle.expected_hessian(theta_hat, data.n) if oracle is not None else None
    if closed is None:
        raise Unsupported(f"hessian-normal intervals need a closed-form expected Hessian for {m.name}")
    inverse, pd = inverse_information(closed)
    if not pd:
        raise HessianNotPD(f"expected Hessian of {m.name} is not positive definite; no tau2 for v")
    tau = math.sqrt(inverse[m.p, m.p])
    centre = float(as_vector(v_hat)[0])
    return [(centre - z * tau, centre + z * tau) for z in (stats.norm.ppf(1.0 - a / 2.0) for a in alphas)]


def run_coverage(cfg: ExperimentConfig, jobs: int = 1) -> CoverageResult:
    """Empirical coverage of each method's 1 - alpha interval for the future v."""
    m = get_model(cfg.model).with_param_scale(cfg.param_scale)
    theta = as_vector(m.theta_from_natural(np.asarray(cfg.theta, dtype=float)))
    rows = []
    for n in cfg.sizes:
        intervals = {}
        methods = []
        for method in cfg.methods:
            if method == "hessian-normal":
                methods.append(method)
                continue
            try:
                intervals[method] = [_pivot_interval(m, method, n, a, cfg.prior) for a in cfg.alphas]
                methods.append(method)
            except ImproperPosterior as exc:
                logger.warning(f"skipping {method} at n={n}: {exc}")

        def run(i):
            v, data = _replicate(m, theta, n, cfg.seed, i)
            covered = np.zeros((len(methods), len(cfg.alphas)), dtype=bool)
            width = np.zeros((len(methods), len(cfg.alphas)))
            for a, method in enumerate(methods):
                if method == "hessian-normal":
                    bounds = _hessian_normal(m, data, cfg.alphas)
                    for k, (lo, hi) in enumerate(bounds):
                        covered[a, k] = lo <= v[0] <= hi
                        width[a, k] = float(_observed(m, hi) - _observed(m, lo))
                    continue
                r, _ = m.oracle.pivot(v[None, :], data)
                for k, interval in enumerate(intervals[method]):
                    covered[a, k] = interval.covers(float(r[0]))
                    with np.errstate(divide="ignore"):
                        ends = m.oracle.observation(m.oracle.pivot_inverse([interval.lower, interval.upper], data))
                    width[a, k] = float(ends[1] - ends[0])
            return covered, width

        if jobs <= 1:
            results = [run(i) for i in range(cfg.replications)]
        else:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(run, range(cfg.replications)))
        covered = np.stack([c for c, _ in results])
        widths = np.stack([w for _, w in results])

        for a, method in enumerate(methods):
            for k, alpha in enumerate(cfg.alphas):
                p = float(covered[:, a, k].mean())
                rows.append(CoverageRow(method=method, alpha=alpha, n=n, replications=cfg.replications,
                                        coverage=p, se=math.sqrt(p * (1.0 - p) / cfg.replications),
                                        mean_width=float(widths[:, a, k].mean())))
                logger.info(f"coverage {method} n={n} alpha={alpha}: {p:.4f}")
    return CoverageResult(model=m.name, seed=cfg.seed, rows=rows)


def _future_draws(cfg: ExperimentConfig, n: int, n_mc: int, jobs: int):
    """Columns (ybar, y_future) for the exponential model, drawn chunkwise."""
    m = get_model(cfg.model)
    oracle = m.oracle
    if oracle is None or not hasattr(oracle, "sample_mean"):
        raise NotApplicable(f"moment studies need the exponential future model, got {m.name}")
    theta = as_vector(m.theta_from_natural(np.asarray(cfg.theta, dtype=float)))

    def draw(rng, size):
        ybar = oracle.sample_mean(theta, n, size, rng)
        future = oracle.observation(m.sample_v(theta, size, rng)[:, 0])
        return np.column_stack([ybar, future])

    chunks = numeric.draw_chunked(draw, n_mc, seed=cfg.seed, jobs=jobs)
    return m, float(oracle.lam(theta)), np.concatenate(chunks, axis=0)


def r_term_study(cfg: ExperimentConfig, n_mc: Optional[int] = None, jobs: int = 1) -> RTermStudy:
    """Moments of R = (v_hat - v) - I^{-1} S and Z = (ybar - y_future) / lambda per n.

    With a = ybar / lambda and b = y_future / lambda,
    R = [log a - (a - 1)] - [log b - (b - 1)], which tends to b - 1 - log b.
    """
    n_mc = n_mc or settings.MOMENT_DRAWS
    rows = []
    name = cfg.model
    lam = float(cfg.theta[0])
    for n in cfg.sizes:
        m, lam, draws = _future_draws(cfg, n, n_mc, jobs)
        name = m.name
        a, b = draws[:, 0] / lam, draws[:, 1] / lam
        r = (np.log(a) - (a - 1.0)) - (np.log(b) - (b - 1.0))
        z = a - b
        mean_r, mean_r_se = numeric.mean_with_se(r)
        var_r, var_r_se = numeric.variance_with_se(r)
        mean_z, mean_z_se = numeric.mean_with_se(z)
        var_z, var_z_se = numeric.variance_with_se(z)
        cov, cov_se = numeric.covariance_with_se(draws[:, 0], np.log(draws[:, 0]) - np.log(draws[:, 1]))
        var_log_y, var_log_y_se = numeric.variance_with_se(np.log(draws[:, 1]))
        rows.append(RTermRow(n=n, n_mc=n_mc, mean_r=mean_r, mean_r_se=mean_r_se, var_r=var_r, var_r_se=var_r_se,
                             mean_abs_r=float(np.mean(np.abs(r))), mean_z=mean_z, mean_z_se=mean_z_se,
                             var_z=var_z, var_z_se=var_z_se, var_z_expected=1.0 + 1.0 / n,
                             cov_theta_v=cov, cov_theta_v_se=cov_se, cov_expected=lam / n,
                             var_log_y=var_log_y, var_log_y_se=var_log_y_se))
        logger.info(f"R term n={n}: mean {mean_r:.5f} +- {mean_r_se:.5f}, V(log y) {var_log_y:.5f}")

    # Z tends to 1 - xi with xi ~ Exp(1); its density at z = 1 is e^0
    ratio = float(stats.expon.pdf(0.0) / stats.norm.pdf(1.0))
    if ratio <= 5.0:
        logger.warning(f"limiting Z density ratio f(1)/phi(1) = {ratio:.4f}, not above the quoted 5")
    return RTermStudy(model=name, theta=[lam], seed=cfg.seed, rows=rows, euler_gamma=EULER_GAMMA,
                      var_log_y_limit=PI2_6, z_limit_ratio=ratio, z_limit_ratio_flagged=ratio <= 5.0)


def posterior_var_term(n: int, prior: str) -> float:
    """V[log lambda | y] under a flat prior: trigamma of the inverse-gamma shape."""
    if prior == "flat_lambda":
        if n < 2:
            raise ImproperPosterior("the flat-lambda posterior is improper when n = 1", n=n)
        return float(polygamma(1, n - 1))
    return float(polygamma(1, n))


def duality_check(cfg: ExperimentConfig, n_mc: Optional[int] = None, jobs: int = 1) -> list[DualityResult]:
    """Both variance decompositions of v = log y_future for each n and flat prior.

    Posterior side: V[v | y] = E[tau | y] + V[e | y] with tau = pi^2/6 the
    variance of log y_future given lambda. Sampling side:
    V[v_hat - v | lambda] = E[tau | lambda] + V[e | lambda] with
    e = log ybar, estimated by Monte Carlo.
    """
    n_mc = n_mc or settings.MOMENT_DRAWS
    results = []
    for n in cfg.sizes:
        _, _, draws = _future_draws(cfg, n, n_mc, jobs)
        log_ybar = np.log(draws[:, 0])
        errors = log_ybar - np.log(draws[:, 1])
        var_e, var_e_se = numeric.variance_with_se(log_ybar)
        total, total_se = numeric.variance_with_se(errors)
        # V(a - b) = V(a) + V(b) for independent a, b; the gap is Monte Carlo noise
        gap_se = math.hypot(total_se, var_e_se)
        for prior in ("flat_lambda", "flat_log_lambda"):
            try:
                post_var = posterior_var_term(n, prior)
            except ImproperPosterior as exc:
                logger.warning(f"duality at n={n}: {exc}")
                continue
            results.append(DualityResult(
                n=n,
                prior=prior,
                replications=n_mc,
                posterior_mean_term=PI2_6,
                posterior_var_term=post_var,
                posterior_total=PI2_6 + post_var,
                sampling_mean_term=PI2_6,
                sampling_var_term=var_e,
                sampling_var_term_se=var_e_se,
                sampling_total=total,
                sampling_total_se=total_se,
                sampling_self_gap=total - (PI2_6 + var_e),
                sampling_self_gap_se=gap_se,
                mean_gap=0.0,
                var_gap=post_var - var_e,
                var_gap_se=var_e_se,
            ))
    return results


def scale_sensitivity_study(cfg: ExperimentConfig) -> list[ScaleRow]:
    """compare_triple on a canonical data set over the n grid and both parameter scales."""
    m = get_model(cfg.model)
    rows = []
    for n in cfg.sizes:
        data = ObservedData.of(np.ones(n))
        for scale, prior in (("natural", "flat_lambda"), ("log", "flat_log_lambda")):
            try:
                _, dist = compare_triple(m, data, param_scale=scale, prior=prior)
            except ImproperPosterior as exc:
                logger.warning(f"n={n} {scale} scale: {exc}")
                rows.append(ScaleRow(n=n, param_scale=scale, prior=prior, status="ImproperPosterior"))
                continue
            rows.append(ScaleRow(
                n=n, param_scale=scale, prior=prior,
                **{f"sup_{k}": val for k, val in dist.sup_norm.items()},
                **{f"tv_{k}": val for k, val in dist.total_variation.items()},
            ))
    return rows
