"""
Predictive distributions for a future observation

Three ways to predict v from y: the pivotal predictive, the flat-prior
posterior predictive and the h-distribution, i.e. exp(APHL) renormalized
over v. Closed forms are frozen SciPy laws on the pivot scale r; everything
else is a DensityGrid on the v scale that can be pushed forward to r.

Usage:
    m = get_model("exp-future-log")
    prediction = predict(m, data, param_scale="log-lambda", alpha=0.05)
"""

import logging
import math
from typing import Optional

import numpy as np
from scipy import optimize as sp_optimize
from scipy.integrate import trapezoid
from scipy.interpolate import PchipInterpolator

from hlikelihood import numeric, optimize, settings
from hlikelihood.exceptions import (
    ConfigError,
    HessianNotNegDef,
    HlikError,
    ImproperPosterior,
    MaxIterations,
    NoInteriorMode,
    NonConvergent,
    NonFinite,
    Unsupported,
)
from hlikelihood.items import (
    BoxDomain,
    DensityGrid,
    HdpInterval,
    Interval,
    ObservedData,
    Prediction,
    PredictiveTriple,
    TripleDistances,
)
from hlikelihood.likelihood import as_vector
from hlikelihood.models.base import JointModel

logger = logging.getLogger(__name__)

PARAM_SCALE_ALIASES = {
    "lambda": "natural",
    "natural": "natural",
    "log-lambda": "log",
    "log_lambda": "log",
    "eta": "log",
    "log": "log",
}
FLAT_PRIORS = ("flat_lambda", "flat_log_lambda")

# doublings of the pilot bracket before a tail is declared non-decaying
MAX_EXPANSIONS = 60


def normalize_param_scale(text: str) -> str:
    try:
        return PARAM_SCALE_ALIASES[text]
    except KeyError:
        raise ConfigError(f"unknown parameter scale {text!r}; use lambda or log-lambda") from None


def _scaled(m: JointModel, param_scale: Optional[str]) -> JointModel:
    if param_scale is None:
        return m
    return m.with_param_scale(normalize_param_scale(param_scale))


def _require_1d(m: JointModel):
    if m.d != 1:
        raise Unsupported(f"predictive grids need a scalar unobservable; {m.name} has d={m.d}")


def _pivot_oracle(m: JointModel):
    oracle = m.oracle
    if oracle is None or getattr(oracle, "pivot_label", None) is None:
        raise Unsupported(f"{m.name} has no known predictive pivot")
    return oracle


# profile and APHL ------------------------------------------------------------

def _profile_newton(m: JointModel, data: ObservedData, v: np.ndarray, theta0: np.ndarray) -> np.ndarray:
    y = data.array
    p = m.p
    lower = np.array([axis.lower for axis in m.support_theta.axes])
    upper = np.array([axis.upper for axis in m.support_theta.axes])

    def fun(theta):
        if not m.support_theta.contains(theta):
            return -math.inf
        with np.errstate(all="ignore"):
            value = float(m.h(theta, v, y))
        return -math.inf if math.isnan(value) else value

    def derivs(theta):
        with np.errstate(all="ignore"):
            grad, hess = m.h_derivatives(theta, v, y)
        return grad[:p], hess[:p, :p]

    result = optimize.maximize(fun, derivs, theta0, lower, upper)
    if result.status == optimize.BOUNDARY:
        raise NoInteriorMode(f"h has no interior maximum in theta at v={v.tolist()} for {m.name}")
    if result.status == optimize.SADDLE:
        raise HessianNotNegDef(f"theta profile of {m.name} ended at a saddle for v={v.tolist()}")
    if result.status == optimize.MAX_ITER:
        raise MaxIterations(f"theta profile did not converge in {result.iterations} iterations")
    if result.status in (optimize.STALLED, optimize.DIVERGED):
        raise NonConvergent(f"theta profile stopped at v={v.tolist()}: {result.message}")
    return result.x


def _profile_many(m: JointModel, data: ObservedData, v_nodes: np.ndarray, strict: bool = True) -> np.ndarray:
    """Profile theta for each row of v_nodes, shape (N, d) -> (N, p).

    With strict=False a node whose profile fails gets NaN instead of raising.
    """
    oracle = m.oracle
    if oracle is not None and hasattr(oracle, "profile_theta"):
        return np.asarray(oracle.profile_theta(v_nodes, data), dtype=float).reshape(len(v_nodes), m.p)
    out = np.empty((len(v_nodes), m.p))
    init = as_vector(m.default_init(data)[0])
    start = init
    for i, v in enumerate(v_nodes):
        try:
            try:
                out[i] = _profile_newton(m, data, v, start)
            except (NonConvergent, MaxIterations):
                # warm starts can walk off; retry once from the moment start
                out[i] = _profile_newton(m, data, v, init)
        except HlikError as exc:
            if strict:
                raise
            logger.debug(f"no profile theta at v={v.tolist()}: {exc}")
            out[i] = np.nan
            continue
        start = out[i]
    return out


def profile_theta(m: JointModel, data: ObservedData, v) -> np.ndarray:
    """theta maximizing h(theta, v; y) at fixed v."""
    m.check_data(data)
    return _profile_many(m, data, as_vector(v)[None, :])[0]


def _aphl_many(m: JointModel, data: ObservedData, v_nodes: np.ndarray, strict: bool = True) -> np.ndarray:
    """APHL at each row of v_nodes.

    With strict=False, nodes where the profile fails or D(h, theta) is not a
    positive finite number get -inf; density grids reach far into the tails.
    """
    p = m.p
    y = data.array
    theta = _profile_many(m, data, v_nodes, strict=strict)
    with np.errstate(all="ignore"):
        h = m.h(theta, v_nodes, y)
        _, hess = m.h_derivatives(theta, v_nodes, y)
        det = np.linalg.det(np.nan_to_num(-hess[..., :p, :p], nan=0.0, posinf=0.0, neginf=0.0))
        bad = ~(det > 0) | ~np.all(np.isfinite(hess[..., :p, :p]), axis=(-2, -1))
        if strict and np.any(bad):
            where = v_nodes[np.argmax(bad)].tolist()
            raise HessianNotNegDef(f"D(h, theta) is not positive at the profile point for v={where}", v=where)
        out = h - 0.5 * np.log(np.where(bad, 1.0, det))
    return np.where(bad | np.isnan(out), -np.inf, out)


def aphl(m: JointModel, data: ObservedData, v, param_scale: Optional[str] = None) -> float:
    """h(theta(v), v; y) - 1/2 log det(-d2h/dtheta2) at the profile theta(v)."""
    m = _scaled(m, param_scale)
    m.check_data(data)
    return float(_aphl_many(m, data, as_vector(v)[None, :])[0])


# density grids ----------------------------------------------------------------

def _log_mass(logf, support: Interval) -> float:
    domain = BoxDomain(axes=[support])
    try:
        return numeric.log_integrate(lambda x: logf(float(x[0])), domain).value
    except NonConvergent as exc:
        raise ImproperPosterior(f"density over [{support.lower}, {support.upper}] cannot be normalized: {exc}") \
            from None


def _bracket(logf, support: Interval, log_z: float, tail_mass: float) -> tuple[float, float]:
    """Grid ends leaving at most tail_mass / 2 in each tail, from a pilot centre and spread."""
    center, scale, _ = numeric.locate(lambda x: logf(float(x[0])), BoxDomain(axes=[support]))
    c, s = float(center[0]), float(scale[0])
    limit = math.log(tail_mass / 2.0)

    def expand(direction):
        step = 6.0 * s
        for _ in range(MAX_EXPANSIONS):
            edge = c + direction * step
            if direction < 0 and edge <= support.lower:
                return support.lower
            if direction > 0 and edge >= support.upper:
                return support.upper
            tail = Interval(lower=-math.inf, upper=edge) if direction < 0 else Interval(lower=edge, upper=math.inf)
            tail = Interval(lower=max(tail.lower, support.lower), upper=min(tail.upper, support.upper))
            try:
                if _log_mass(logf, tail) - log_z <= limit:
                    return edge
            except NonFinite:
                return edge
            step *= 2.0
        raise ImproperPosterior("density tails do not decay; it cannot be normalized")

    lo = support.lower if math.isfinite(support.lower) else expand(-1.0)
    hi = support.upper if math.isfinite(support.upper) else expand(1.0)
    return lo, hi


def _grid_nodes(support: Interval, lo: float, hi: float, count: int) -> np.ndarray:
    # geometric spacing off a finite face so polynomial tails stay resolved
    if lo == support.lower and math.isfinite(lo) and not math.isfinite(support.upper):
        return lo + np.concatenate([[0.0], np.geomspace((hi - lo) * 1e-12, hi - lo, count - 1)])
    if hi == support.upper and math.isfinite(hi) and not math.isfinite(support.lower):
        return hi - np.concatenate([[0.0], np.geomspace((hi - lo) * 1e-12, hi - lo, count - 1)])[::-1]
    return np.linspace(lo, hi, count)


def _tabulate(logf, logf_many, support: Interval, nodes: int, tail_mass: float,
              scale_label: str = "v") -> DensityGrid:
    log_z = _log_mass(logf, support)
    lo, hi = _bracket(logf, support, log_z, tail_mass)
    x = _grid_nodes(support, lo, hi, nodes)
    logd = np.asarray(logf_many(x), dtype=float)
    grid = DensityGrid(support=support, nodes=x.tolist(), log_density=logd.tolist(),
                       log_normalizer=log_z, scale_label=scale_label)
    logger.debug(f"density grid on [{lo:.6g}, {hi:.6g}] with {nodes} nodes, mass {grid.total_mass():.10f}")
    return grid


def h_distribution(m: JointModel, data: ObservedData, param_scale: Optional[str] = None,
                   nodes: int = settings.GRID_NODES, tail_mass: float = settings.GRID_TAIL_MASS) -> DensityGrid:
    """exp(APHL) renormalized over v, tabulated on the v scale."""
    m = _scaled(m, param_scale)
    _require_1d(m)
    m.check_data(data)
    if m.oracle is not None and hasattr(m.oracle, "h_law"):
        m.oracle.h_law(data.n)

    def logf(v):
        return float(_aphl_many(m, data, np.array([[v]]), strict=False)[0])

    return _tabulate(logf, lambda x: _aphl_many(m, data, x[:, None], strict=False), m.support_v().axes[0],
                     nodes, tail_mass)


def pivotal_predictive(m: JointModel, data: ObservedData):
    """Frozen law of the pivot r given n."""
    oracle = _pivot_oracle(m)
    m.check_data(data)
    return oracle.pivotal_law(data.n)


def _log_prior(m: JointModel, prior: str):
    if prior == "flat_log_lambda" and any(axis.lower < 0 for axis in m.support_theta.axes):
        raise Unsupported(f"a flat prior on log theta needs a positive parameter; {m.name} has none")

    def log_prior(theta):
        log_pi = 0.0
        if prior == "flat_log_lambda":
            log_pi = -float(np.sum(np.log(m.theta_natural(theta))))
        return log_pi + float(m.theta_log_jacobian(theta))

    return log_prior


def posterior_predictive_grid(m: JointModel, data: ObservedData, prior: str = "flat_lambda",
                              nodes: int = settings.GRID_NODES,
                              tail_mass: float = settings.GRID_TAIL_MASS) -> DensityGrid:
    """Flat-prior posterior predictive of v by quadrature over theta."""
    _require_1d(m)
    m.check_data(data)
    y = data.array
    log_prior = _log_prior(m, prior)

    def logf(v):
        v = np.array([v])

        def integrand(theta):
            if not m.support_theta.contains(theta):
                return -math.inf
            with np.errstate(all="ignore"):
                value = float(m.h(theta, v, y)) + log_prior(theta)
            return -math.inf if math.isnan(value) else value

        try:
            return numeric.log_integrate(integrand, m.support_theta).value
        except NonFinite:
            return -math.inf
        except NonConvergent:
            raise ImproperPosterior(f"posterior of {m.name} at v={v.tolist()} is not integrable") from None

    return _tabulate(logf, lambda x: np.array([logf(float(t)) for t in x]), m.support_v().axes[0],
                     nodes, tail_mass)


def posterior_predictive_flat(m: JointModel, data: ObservedData, prior: str = "flat_lambda",
                              nodes: int = settings.GRID_NODES):
    """Closed-form law on r when the model has one, else a DensityGrid over v."""
    if prior not in FLAT_PRIORS:
        raise ConfigError(f"unknown flat prior {prior!r}; choose from {', '.join(FLAT_PRIORS)}")
    m.check_data(data)
    oracle = m.oracle
    if oracle is not None and getattr(oracle, "pivot_label", None) is not None:
        return oracle.posterior_law(data.n, prior)
    return posterior_predictive_grid(m, data, prior, nodes)


# HDP intervals ------------------------------------------------------------------

def hdp_constant(alpha: float, n: int) -> float:
    """c(alpha, n) = n (alpha^(-1/n) - 1), the upper end of the Lomax(n, n) HDP set."""
    return n * (alpha ** (-1.0 / n) - 1.0)


def _law_hdp(law, alpha: float) -> HdpInterval:
    lo_sup, hi_sup = (float(b) for b in law.support())
    monotone = math.isfinite(lo_sup) and law.pdf(lo_sup) >= law.pdf(law.ppf(0.5))
    if monotone:
        upper = lo_sup if alpha >= 1.0 else float(law.ppf(1.0 - alpha))
        return HdpInterval(level=1.0 - alpha, lower=lo_sup, upper=upper, c=upper)
    if alpha >= 1.0:
        mode = float(law.median())
        return HdpInterval(level=0.0, lower=mode, upper=mode)

    def width(p):
        return float(law.ppf(p + 1.0 - alpha) - law.ppf(p))

    best = sp_optimize.minimize_scalar(width, bounds=(0.0, alpha), method="bounded",
                                       options={"xatol": 1e-12})
    return HdpInterval(level=1.0 - alpha, lower=float(law.ppf(best.x)),
                       upper=float(law.ppf(best.x + 1.0 - alpha)))


def _quantile_from_masses(x: np.ndarray, masses: np.ndarray, p: float) -> float:
    cdf = np.concatenate([[0.0], np.cumsum(masses)])
    cdf /= cdf[-1]
    keep = np.concatenate([[True], np.diff(cdf) > 0])
    return float(PchipInterpolator(cdf[keep], x[keep])(p))


def _grid_hdp(grid: DensityGrid, alpha: float, masses: Optional[np.ndarray] = None) -> HdpInterval:
    x = grid.x
    f = grid.density()
    masses = grid.cell_masses() if masses is None else np.asarray(masses, dtype=float)
    if alpha >= 1.0:
        mode = float(x[np.argmax(f)])
        return HdpInterval(level=0.0, lower=mode, upper=mode, scale=grid.scale_label)

    # water-filling: take cells by decreasing density until 1 - alpha is covered
    cell_density = 0.5 * (f[1:] + f[:-1])
    order = np.argsort(-cell_density, kind="stable")
    cum = np.cumsum(masses[order]) / masses.sum()
    k = min(int(np.searchsorted(cum, 1.0 - alpha)) + 1, order.size)
    chosen = np.sort(order[:k])

    if chosen[0] == 0 and chosen[-1] == k - 1:
        lower = grid.support.lower if math.isfinite(grid.support.lower) else float(x[0])
        upper = _quantile_from_masses(x, masses, 1.0 - alpha)
        return HdpInterval(level=1.0 - alpha, lower=lower, upper=upper, c=upper, scale=grid.scale_label)

    intervals = []
    start = prev = int(chosen[0])
    for i in chosen[1:]:
        i = int(i)
        if i != prev + 1:
            intervals.append((float(x[start]), float(x[prev + 1])))
            start = i
        prev = i
    intervals.append((float(x[start]), float(x[prev + 1])))
    return HdpInterval(level=1.0 - alpha, lower=intervals[0][0], upper=intervals[-1][1],
                       scale=grid.scale_label, intervals=intervals)


def hdp_interval(d, alpha: float, masses=None) -> HdpInterval:
    """Highest-density set of level 1 - alpha for a frozen law or a DensityGrid.

    For grids, `masses` overrides the trapezoid cell masses, e.g. with the
    masses of the v grid a pivot-scale grid was pushed forward from.
    """
    if not 0.0 < alpha <= 1.0:
        raise ConfigError(f"alpha must lie in (0, 1], got {alpha}")
    if isinstance(d, DensityGrid):
        return _grid_hdp(d, alpha, masses)
    return _law_hdp(d, alpha)


# comparisons ----------------------------------------------------------------------

def pivot_grid(grid: DensityGrid, m: JointModel, data: ObservedData) -> DensityGrid:
    """Push a v-scale grid forward to the pivot scale."""
    oracle = _pivot_oracle(m)
    r, log_jac = oracle.pivot(grid.x[:, None], data)
    with np.errstate(all="ignore"):
        ends, _ = oracle.pivot(np.array([[grid.support.lower], [grid.support.upper]]), data)
    support = Interval(lower=float(np.min(ends)), upper=float(np.max(ends)))
    return grid.pushforward(r, log_jac, support, oracle.pivot_label)


def _on_v(law, r: np.ndarray, log_jac: np.ndarray, template: DensityGrid) -> DensityGrid:
    with np.errstate(divide="ignore"):
        logd = law.logpdf(r) + log_jac
    return DensityGrid(support=template.support, nodes=template.nodes, log_density=np.asarray(logd).tolist(),
                       log_normalizer=0.0, scale_label=template.scale_label)


def compare_triple(m: JointModel, data: ObservedData, param_scale: Optional[str] = None,
                   prior: Optional[str] = None) -> tuple[PredictiveTriple, TripleDistances]:
    """Pivotal, flat-prior posterior and h-distribution on shared nodes, with their distances.

    Sup-norm distances are between r-scale densities at the grid nodes; total
    variation is computed on the v grid. The default prior is flat on the
    chosen parameter scale.
    """
    scale = normalize_param_scale(param_scale) if param_scale is not None else m.param_scale
    mh = m.with_param_scale(scale)
    oracle = _pivot_oracle(mh)
    mh.check_data(data)
    prior = prior or ("flat_log_lambda" if scale == "log" else "flat_lambda")
    posterior_law = oracle.posterior_law(data.n, prior)
    pivotal_law = oracle.pivotal_law(data.n)

    h_grid = h_distribution(mh, data)
    r, log_jac = oracle.pivot(h_grid.x[:, None], data)
    pivotal = _on_v(pivotal_law, r, log_jac, h_grid)
    posterior = _on_v(posterior_law, r, log_jac, h_grid)

    v_densities = {"h_dist": h_grid.density(), "pivotal": pivotal.density(), "posterior": posterior.density()}
    jac = np.exp(log_jac)
    pairs = {"h_vs_pivotal": ("h_dist", "pivotal"), "h_vs_posterior": ("h_dist", "posterior"),
             "pivotal_vs_posterior": ("pivotal", "posterior")}
    sup_norm, total_variation = {}, {}
    for key, (a, b) in pairs.items():
        diff = np.abs(v_densities[a] - v_densities[b])
        sup_norm[key] = float(np.max(diff / jac))
        total_variation[key] = float(0.5 * trapezoid(diff, h_grid.x))

    logger.info(f"{mh.name} n={data.n} {scale}-scale triple: sup-norm {sup_norm}")
    triple = PredictiveTriple(model=mh.name, n=data.n, param_scale=scale, prior=prior, pivotal=pivotal,
                              posterior=posterior, h_dist=h_grid, pivot_nodes=np.asarray(r).tolist(),
                              pivot_log_jacobian=np.broadcast_to(log_jac, np.shape(r)).tolist(),
                              pivot_label=oracle.pivot_label)
    return triple, TripleDistances(sup_norm=sup_norm, total_variation=total_variation)


def predict(m: JointModel, data: ObservedData, param_scale: Optional[str] = None, alpha: float = 0.05,
            prior: Optional[str] = None) -> Prediction:
    """The predictive triple with HDP intervals on the pivot scale and in observation units."""
    triple, distances = compare_triple(m, data, param_scale, prior)
    mh = m.with_param_scale(triple.param_scale)
    oracle = mh.oracle
    hdp = {
        "pivotal": hdp_interval(oracle.pivotal_law(data.n), alpha),
        "posterior": hdp_interval(oracle.posterior_law(data.n, triple.prior), alpha),
        "h_dist": hdp_interval(pivot_grid(triple.h_dist, mh, data), alpha, masses=triple.h_dist.cell_masses()),
    }

    def observed(r):
        with np.errstate(divide="ignore"):
            return float(oracle.observation(oracle.pivot_inverse(r, data)))

    hdp_observation = {key: (observed(iv.lower), observed(iv.upper)) for key, iv in hdp.items()}
    return Prediction(triple=triple, distances=distances, alpha=alpha, hdp=hdp, hdp_observation=hdp_observation)
