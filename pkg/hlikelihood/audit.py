"""
Bartlett identity audit

For a joint model the h-likelihood satisfies the first Bartlett identity iff
E_theta[S_theta(v)] = 0, with S_theta(v) the v-score of log f_theta(v), and
the second one iff additionally E_theta[dS/dv + S S'] = 0. Both expectations
are computed by quadrature at each theta of a grid. Boundary tests on the
support faces and a Monte Carlo check of the full identities are reported
next to them as explanation; verdicts use the condition values only.

Usage:
    report = audit(get_model("bayarri-log"))
    ranking = bartlize_search(get_model("bayarri"))
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import NamedTuple, Optional

import numpy as np

from hlikelihood import numeric, settings
from hlikelihood.exceptions import ConfigError, EmptyCatalogResult, NonFinite, NotApplicable
from hlikelihood.items import (
    BartlettPoint,
    BartlettReport,
    BoundaryVerdict,
    FullIdentityResidual,
    QuadratureSpec,
    RngStream,
    TransformRanking,
)
from hlikelihood.likelihood import as_vector
from hlikelihood.models.base import JointModel
from hlikelihood.models.transforms import CATALOG

logger = logging.getLogger(__name__)

FINITE_FACE_STEPS = 30
INFINITE_FACE_STEPS = 60


class ConditionValue(NamedTuple):
    value: np.ndarray
    error: float


class ScoreOfMarginal:
    """S_theta(v) = d log f_theta(v) / dv and dS/dv at a fixed theta."""

    def __init__(self, model: JointModel, theta):
        if model.support_depends_on_theta:
            raise NotApplicable(f"the support of v depends on theta for {model.name}")
        self.model = model
        self.theta = as_vector(theta)
        self.support = model.support_v(self.theta)

    def log_density(self, v) -> float:
        with np.errstate(all="ignore"):
            value = float(self.model.log_marg_v(self.theta, as_vector(v)))
        return -math.inf if math.isnan(value) else value

    def density(self, v) -> float:
        return math.exp(self.log_density(v))

    def __call__(self, v):
        with np.errstate(all="ignore"):
            score, jac = self.model.marginal_score(self.theta, as_vector(v))
        return np.atleast_1d(score), np.atleast_2d(jac)

    def locate(self):
        center, scale, _ = numeric.locate(self.log_density, self.support)
        return center, scale


def audit_quadrature() -> QuadratureSpec:
    """Default rule for the condition integrals, with the audit's absolute floor."""
    return numeric.default_quadrature().model_copy(update={"abs_tol": settings.AUDIT_QUAD_ABS_TOL})


def _integrate_weighted(marginal: ScoreOfMarginal, component, spec):
    center, scale = marginal.locate()
    spec = spec or audit_quadrature()

    def integrand(v):
        f = marginal.density(v)
        if f == 0.0:
            return 0.0
        return component(v) * f

    return numeric.integrate(integrand, marginal.support, spec, center=center, scale=scale)


def check_condition1(m: JointModel, theta, spec: Optional[QuadratureSpec] = None) -> ConditionValue:
    """E_theta[S_theta(v)], one entry per coordinate of v."""
    marginal = ScoreOfMarginal(m, theta)
    values, errors = [], []
    for j in range(m.d):
        result = _integrate_weighted(marginal, lambda v, j=j: float(marginal(v)[0][j]), spec)
        values.append(result.value)
        errors.append(result.error)
    return ConditionValue(np.array(values), max(errors))


def check_condition2(m: JointModel, theta, spec: Optional[QuadratureSpec] = None) -> ConditionValue:
    """E_theta[dS/dv + S S'] as a d x d matrix."""
    marginal = ScoreOfMarginal(m, theta)

    def entry(v, i, j):
        score, jac = marginal(v)
        return float(jac[i, j] + score[i] * score[j])

    out = np.zeros((m.d, m.d))
    errors = []
    for i in range(m.d):
        for j in range(i, m.d):
            result = _integrate_weighted(marginal, lambda v, i=i, j=j: entry(v, i, j), spec)
            out[i, j] = out[j, i] = result.value
            errors.append(result.error)
    return ConditionValue(out, max(errors))


# Boundary tests -------------------------------------------------------------

def _approach(bound: float, face: str, center: float, scale: float, steps: int) -> np.ndarray:
    k = np.arange(steps + 1, dtype=float)
    if math.isfinite(bound):
        delta = scale * 2.0 ** -k
        return bound + delta if face == "lower" else bound - delta
    reach = max(abs(center), 1.0) + scale * 2.0 ** k
    return -reach if face == "lower" else reach


def _extrapolate(values: np.ndarray) -> float:
    """Limit of a sequence sampled at geometrically halving steps (one Richardson pass)."""
    last, prev = float(values[-1]), float(values[-2])
    if not math.isfinite(last):
        return last
    return 2.0 * last - prev


def check_boundary(m: JointModel, theta, order: int) -> list[BoundaryVerdict]:
    """Limit of f_theta(v) (order 1) or df/dv (order 2) on every face of the support box."""
    if order not in (1, 2):
        raise ValueError(f"order must be 1 or 2, got {order}")
    marginal = ScoreOfMarginal(m, theta)
    center, scale = marginal.locate()
    tol = settings.AUDIT_ABS_TOL
    verdicts = []

    for j, axis in enumerate(marginal.support.axes):
        limits = {}
        for face, bound in (("lower", axis.lower), ("upper", axis.upper)):
            steps = FINITE_FACE_STEPS if math.isfinite(bound) else INFINITE_FACE_STEPS
            values = []
            for t in _approach(bound, face, float(center[j]), float(scale[j]), steps):
                point = center.copy()
                point[j] = t
                f = marginal.density(point)
                if order == 2:
                    f = 0.0 if f == 0.0 else float(marginal(point)[0][j]) * f
                values.append(f)
            limits[face] = (bound, _extrapolate(np.array(values)))

        lo_limit, hi_limit = limits["lower"][1], limits["upper"][1]
        equal = (abs(lo_limit) >= tol and abs(hi_limit) >= tol
                 and math.isfinite(lo_limit) and abs(lo_limit - hi_limit) < tol)
        for face, (bound, limit) in limits.items():
            if abs(limit) < tol:
                verdict = "Vanishes"
            elif equal:
                verdict = "EqualEndpoints"
            else:
                verdict = "NonVanishing"
            verdicts.append(BoundaryVerdict(axis=j, face=face, order=order, location=bound,
                                            limit=limit, verdict=verdict))
    return verdicts


# Monte Carlo check of the full identities ------------------------------------

def _mean_se(values: np.ndarray, what: str):
    if not np.all(np.isfinite(values)):
        raise NonFinite(f"non-finite {what} among the Monte Carlo draws")
    n = values.shape[0]
    return values.mean(axis=0), values.std(axis=0, ddof=1) / math.sqrt(n)


def _within_band(mean: np.ndarray, se: np.ndarray) -> bool:
    band = np.maximum(settings.AUDIT_ABS_TOL, 3.0 * se)
    return bool(np.all(np.abs(mean) < band))


def check_full_identities(m: JointModel, theta, n_mc: int, stream: RngStream, n_obs: int = 5,
                          y_sampler=None, spec: Optional[QuadratureSpec] = None) -> FullIdentityResidual:
    """Monte Carlo residuals of E[dh/dphi] = 0 and E[d2h/dphi2 + (dh/dphi)(dh/dphi)'] = 0.

    The marginal part log f_theta(v) is split into its theta-theta (A),
    theta-v (B) and v-v (C) blocks of E[d2 log f + d log f d log f'].
    """
    if n_mc < 2:
        raise ValueError("check_full_identities needs n_mc >= 2")
    theta = as_vector(theta)
    p = m.p
    rng = stream.generator()
    v = m.sample_v(theta, n_mc, rng)
    y = (y_sampler or m.sample_y)(theta, v, n_obs, rng)

    with np.errstate(all="ignore"):
        grad, hess = m.h_derivatives(theta, v, y)
        gm, hm = m.marg_grad_hess(theta, v)
    score_mean, score_se = _mean_se(grad, "h-scores")
    second_mean, second_se = _mean_se(hess + grad[:, :, None] * grad[:, None, :], "second-identity terms")
    block_mean, block_se = _mean_se(hm + gm[:, :, None] * gm[:, None, :], "marginal blocks")

    try:
        b_from_c1 = np.array([numeric.gradient(lambda t, j=j: check_condition1(m, t, spec).value[j], theta)
                              for j in range(m.d)]).T
    except NonFinite:
        b_from_c1 = None

    return FullIdentityResidual(
        n_mc=n_mc,
        n_obs=n_obs,
        score_mean=score_mean.tolist(),
        score_se=score_se.tolist(),
        second_residual=second_mean.tolist(),
        second_se=second_se.tolist(),
        block_a=block_mean[:p, :p].tolist(),
        block_a_se=block_se[:p, :p].tolist(),
        block_b=block_mean[:p, p:].tolist(),
        block_b_se=block_se[:p, p:].tolist(),
        block_c=block_mean[p:, p:].tolist(),
        block_c_se=block_se[p:, p:].tolist(),
        block_b_from_condition1=None if b_from_c1 is None else b_from_c1.tolist(),
        first_holds=_within_band(score_mean, score_se),
        second_holds=_within_band(second_mean, second_se),
    )


# Audit driver ---------------------------------------------------------------

def default_theta_grid(m: JointModel, points: int = settings.AUDIT_GRID_POINTS) -> list[np.ndarray]:
    """Natural-scale theta points spread over the model's audit range."""
    lo, hi = m.audit_theta_range
    if m.audit_theta_spacing == "log":
        values = np.geomspace(lo, hi, points)
    else:
        values = np.linspace(lo, hi, points)
    return [np.full(m.p, value) for value in values]


def parse_theta_grid(text: str, p: int = 1) -> list[np.ndarray]:
    """Parse 'lo:hi:k' (log-spaced), 'lin:lo:hi:k', or explicit points.

    Explicit points are separated by ';' with coordinates separated by ','.
    For one-parameter models a plain comma list gives one point per value.
    """
    text = text.strip()
    try:
        if ":" in text:
            parts = text.split(":")
            spacing = "log"
            if parts[0] in ("lin", "log"):
                spacing = parts.pop(0)
            lo, hi, k = float(parts[0]), float(parts[1]), int(parts[2])
            values = np.geomspace(lo, hi, k) if spacing == "log" else np.linspace(lo, hi, k)
            return [np.full(p, value) for value in values]
        if p == 1 and ";" not in text:
            return [np.array([float(x)]) for x in text.split(",") if x.strip()]
        points = [np.array([float(x) for x in chunk.split(",")]) for chunk in text.split(";") if chunk.strip()]
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"cannot parse theta grid {text!r}: {exc}") from exc
    if any(point.size != p for point in points):
        raise ConfigError(f"every theta grid point needs {p} coordinates")
    return points


def _explain(m, c1_ok, c2_ok, faces1, faces2) -> str:
    notes = []
    name = m.v_names[0] if m.d == 1 else "v"
    if m.v_scale == "log":
        name = f"log({name})"

    def where(face):
        return f"{name}={face.location:g}"

    nonvanishing1 = [f for f in faces1 if f.verdict == "NonVanishing"]
    equal1 = [f for f in faces1 if f.verdict == "EqualEndpoints"]
    if nonvanishing1:
        notes.append("f does not vanish at " + ", ".join(f"{where(f)} (limit {f.limit:.6g})" for f in nonvanishing1))
    if equal1 and c1_ok:
        notes.append("condition 1 holds through equal endpoint values although f does not vanish on the boundary")
    if all(f.verdict == "Vanishes" for f in faces1) and not c1_ok:
        notes.append("f vanishes on the boundary but condition 1 fails numerically")
    nonvanishing2 = [f for f in faces2 if f.verdict == "NonVanishing"]
    if nonvanishing2:
        notes.append("df/dv does not vanish at " + ", ".join(where(f) for f in nonvanishing2))
    if (all(f.verdict == "Vanishes" for f in faces1 + faces2)) and not c2_ok:
        notes.append("f and df/dv vanish on the boundary but condition 2 fails numerically")
    return "; ".join(notes)


def audit_point(m: JointModel, theta_natural, spec: Optional[QuadratureSpec] = None,
                n_mc: int = 0, n_obs: int = 5, stream: Optional[RngStream] = None) -> BartlettPoint:
    theta_natural = as_vector(theta_natural)
    if m.support_depends_on_theta:
        return BartlettPoint(theta=theta_natural.tolist(), cond1=[], cond1_error=0.0, cond2=[], cond2_error=0.0,
                             tolerance=settings.AUDIT_ABS_TOL, verdict="NotApplicable",
                             explanation="the support of v depends on theta")
    theta = as_vector(m.theta_from_natural(theta_natural))
    c1 = check_condition1(m, theta, spec)
    c2 = check_condition2(m, theta, spec)
    faces1 = check_boundary(m, theta, 1)
    faces2 = check_boundary(m, theta, 2)

    full = None
    tol = max(settings.AUDIT_ABS_TOL, 5.0 * c1.error, 5.0 * c2.error)
    if n_mc:
        full = check_full_identities(m, theta, n_mc, stream, n_obs=n_obs, spec=spec)

    c1_ok = bool(np.all(np.abs(c1.value) < tol))
    c2_ok = bool(np.all(np.abs(c2.value) < tol))
    verdict = "Bartlized" if c1_ok and c2_ok else "FirstOnly" if c1_ok else "Fails"
    explanation = _explain(m, c1_ok, c2_ok, faces1, faces2)
    if full is not None and full.first_holds != c1_ok:
        note = (f"the Monte Carlo first identity {'holds' if full.first_holds else 'fails'} within 3 SE "
                f"while condition 1 {'holds' if c1_ok else 'fails'}")
        explanation = f"{explanation}; {note}" if explanation else note
    if "numerically" in explanation or "Monte Carlo" in explanation:
        logger.warning(f"{m.name} at theta={theta_natural.tolist()}: {explanation}")

    difference = None
    if m.d == 1:
        limits = {f.face: f.limit for f in faces1}
        difference = [limits["upper"] - limits["lower"]]

    return BartlettPoint(
        theta=theta_natural.tolist(),
        cond1=c1.value.tolist(),
        cond1_error=c1.error,
        cond2=c2.value.tolist(),
        cond2_error=c2.error,
        boundary_difference=difference,
        boundary=faces1 + faces2,
        full_identities=full,
        tolerance=tol,
        verdict=verdict,
        explanation=explanation,
    )


def audit(m: JointModel, theta_grid=None, spec: Optional[QuadratureSpec] = None, n_mc: int = 0,
          n_obs: int = 5, seed: Optional[int] = None, jobs: int = 1) -> BartlettReport:
    """Audit every point of a natural-scale theta grid; point i uses stream (seed, i)."""
    grid = [as_vector(t) for t in (theta_grid if theta_grid is not None else default_theta_grid(m))]
    if n_mc and seed is None:
        raise ConfigError("the Monte Carlo identity check needs a seed")

    def run(i):
        stream = RngStream(seed=seed, stream_id=i) if n_mc else None
        return audit_point(m, grid[i], spec=spec, n_mc=n_mc, n_obs=n_obs, stream=stream)

    if jobs > 1 and len(grid) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            points = list(pool.map(run, range(len(grid))))
    else:
        points = [run(i) for i in range(len(grid))]

    report = BartlettReport(model=m.name, v_scale=m.v_scale,
                            support_depends_on_theta=m.support_depends_on_theta, points=points)
    logger.info(f"audit of {m.name}: " + ", ".join(f"{p.theta[0]:g}:{p.verdict}" for p in points))
    return report


def bartlize_search(m: JointModel, theta_grid=None, catalog=CATALOG,
                    spec: Optional[QuadratureSpec] = None, jobs: int = 1) -> list[TransformRanking]:
    """Transforms of v that pass both conditions on the grid, best first."""
    base = getattr(m, "base", m)
    rankings = []
    for name in catalog:
        try:
            candidate = m.reparameterized(theta_scale=m.param_scale, v_scale=name,
                                          name=f"{base.name}:{name}")
        except NotApplicable as exc:
            logger.info(f"skipping transform {name}: {exc}")
            continue
        report = audit(candidate, theta_grid, spec=spec, jobs=jobs)
        if all(verdict == "Bartlized" for verdict in report.verdicts):
            rankings.append(TransformRanking(transform=name, worst_residual=report.worst_residual(), report=report))
        else:
            logger.info(f"transform {name} fails on the grid: {report.verdicts}")
    if not rankings:
        raise EmptyCatalogResult(f"no transform in {list(catalog)} Bartlizes {base.name}")
    return sorted(rankings, key=lambda ranking: ranking.worst_residual)
