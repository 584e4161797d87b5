"""
Numerical kernel

Central-difference derivatives, quadrature over boxes with infinite faces,
and seeded Monte Carlo expectations. Every other module goes through these.
"""

import itertools
import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy import integrate as sp_integrate

from hlikelihood import settings
from hlikelihood.exceptions import NonConvergent, NonFinite, Unsupported
from hlikelihood.items import BoxDomain, Interval, QuadratureSpec, RngStream

logger = logging.getLogger(__name__)

EPS = np.finfo(float).eps
MAX_QUAD_DIM = 3


class QuadResult(NamedTuple):
    value: float
    error: float


class McEstimate(NamedTuple):
    mean: np.ndarray
    se: np.ndarray
    n: int


def default_quadrature() -> QuadratureSpec:
    return QuadratureSpec(
        rel_tol=settings.QUAD_REL_TOL,
        abs_tol=settings.QUAD_ABS_TOL,
        max_subdivisions=settings.QUAD_MAX_SUBDIVISIONS,
        tail_map=settings.QUAD_TAIL_MAP,
    )


# Change of variables ------------------------------------------------------

def _axis_pieces(axis: Interval, tail_map: str, center: float, scale: float):
    """Split one axis into pieces (t_lo, t_hi, x(t), dx/dt) on finite t-ranges."""
    lo, hi = axis.lower, axis.upper
    if axis.finite or tail_map == "none":
        return [(lo, hi, lambda t: t, lambda t: 1.0)]

    def upper_tail(a):
        return (0.0, 1.0, lambda t: a - scale * math.log(t), lambda t: scale / t)

    def lower_tail(b):
        return (0.0, 1.0, lambda t: b + scale * math.log(t), lambda t: scale / t)

    if math.isfinite(lo):
        return [upper_tail(lo)]
    if math.isfinite(hi):
        return [lower_tail(hi)]
    if tail_map == "exp-compactify":
        return [lower_tail(center), upper_tail(center)]
    return [(0.0, 1.0,
             lambda t: center + scale * math.log(t / (1.0 - t)),
             lambda t: scale / (t * (1.0 - t)))]


def _checked(f: Callable, x: np.ndarray) -> float:
    value = float(f(x))
    if not math.isfinite(value):
        raise NonFinite(f"integrand returned {value} at {x.tolist()}")
    return value


def integrate(f: Callable, domain: BoxDomain, spec: Optional[QuadratureSpec] = None,
              center=None, scale=None) -> QuadResult:
    """Integrate f over a box, mapping infinite faces onto finite ranges.

    f receives a point as a 1-D array of length domain.dim. `center` and
    `scale` place the tail maps (per axis or scalar); they default to 0 and 1.
    """
    spec = spec or default_quadrature()
    d = domain.dim
    if d > MAX_QUAD_DIM:
        raise Unsupported(f"quadrature supports at most {MAX_QUAD_DIM} dimensions, got {d}")
    centers = np.broadcast_to(np.asarray(0.0 if center is None else center, dtype=float), (d,))
    scales = np.broadcast_to(np.asarray(1.0 if scale is None else scale, dtype=float), (d,))

    per_axis = [_axis_pieces(axis, spec.tail_map, float(c), float(s))
                for axis, c, s in zip(domain.axes, centers, scales)]

    total, total_err = 0.0, 0.0
    for pieces in itertools.product(*per_axis):
        value, err = _integrate_piece(f, pieces, spec)
        total += value
        total_err += err

    if not math.isfinite(total):
        raise NonFinite(f"integral evaluated to {total}")
    bound = max(spec.abs_tol, spec.rel_tol * abs(total))
    if total_err > 10.0 * bound and total_err > 1e-10 * max(1.0, abs(total)):
        raise NonConvergent(f"quadrature error {total_err:.3g} exceeds tolerance {bound:.3g}",
                            value=total, error=total_err)
    return QuadResult(total, total_err)


def _sweep_axis(axis: Interval) -> np.ndarray:
    lo, hi = axis.lower, axis.upper
    if axis.finite:
        return lo + (hi - lo) * np.linspace(1e-6, 1.0 - 1e-6, 401)
    steps = np.logspace(-10, 4, 141)
    if math.isfinite(lo):
        return lo + steps
    if math.isfinite(hi):
        return hi - steps[::-1]
    side = np.logspace(-4, 4, 81)
    return np.concatenate([-side[::-1], [0.0], side])


def locate(logf: Callable, domain: BoxDomain):
    """Rough centre, spread and peak of exp(logf) from a sweep along each axis.

    Returns (center, scale, peak) where center and scale are per-axis arrays
    suitable for the tail maps of `integrate`.
    """
    sweeps = [_sweep_axis(axis) for axis in domain.axes]
    x = np.array([sweep[len(sweep) // 2] for sweep in sweeps])
    center = x.copy()
    scale = np.ones(domain.dim)
    peak = -math.inf
    for _ in range(2 if domain.dim > 1 else 1):
        for j, sweep in enumerate(sweeps):
            values = np.empty(sweep.size)
            for k, t in enumerate(sweep):
                point = x.copy()
                point[j] = t
                with np.errstate(all="ignore"):
                    value = float(logf(point))
                values[k] = value if math.isfinite(value) else -math.inf
            best = int(np.argmax(values))
            if not math.isfinite(values[best]):
                raise NonFinite("log-integrand is -inf or undefined on every sweep point")
            weights = np.exp(values - values[best])
            mean = float(np.sum(weights * sweep) / np.sum(weights))
            spread = math.sqrt(float(np.sum(weights * (sweep - mean) ** 2) / np.sum(weights)))
            gap = max(abs(sweep[min(best + 1, sweep.size - 1)] - sweep[best]),
                      abs(sweep[best] - sweep[max(best - 1, 0)]))
            x[j] = sweep[best]
            center[j] = mean
            scale[j] = max(spread, gap)
            peak = float(values[best])
    return center, scale, peak


def log_integrate(logf: Callable, domain: BoxDomain, spec: Optional[QuadratureSpec] = None) -> QuadResult:
    """log of the integral of exp(logf), shifted by the sweep peak before exponentiating.

    The returned error is the relative error of the integral, i.e. the
    absolute error on the log scale.
    """
    center, scale, peak = locate(logf, domain)

    def shifted(x):
        with np.errstate(all="ignore"):
            value = float(logf(x))
        return 0.0 if value == -math.inf else math.exp(value - peak)

    result = integrate(shifted, domain, spec, center=center, scale=scale)
    if not result.value > 0.0:
        raise NonFinite(f"integral of exp(logf) is not positive: {result.value}")
    return QuadResult(peak + math.log(result.value), result.error / result.value)


def _integrate_piece(f, pieces, spec):
    def integrand(*t):
        x = np.array([piece[2](ti) for piece, ti in zip(pieces, t)])
        jac = 1.0
        for piece, ti in zip(pieces, t):
            jac *= piece[3](ti)
        value = _checked(f, x)
        return 0.0 if value == 0.0 else value * jac

    ranges = [(piece[0], piece[1]) for piece in pieces]
    if len(pieces) == 1:
        out = sp_integrate.quad(integrand, *ranges[0], epsabs=spec.abs_tol, epsrel=spec.rel_tol,
                                limit=spec.max_subdivisions, full_output=1)
        value, err = out[0], out[1]
        if len(out) > 3:
            logger.debug(f"quad reported: {out[3]}")
        return value, err

    opts = {"epsabs": spec.abs_tol, "epsrel": spec.rel_tol, "limit": spec.max_subdivisions}
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", sp_integrate.IntegrationWarning)
        value, err = sp_integrate.nquad(integrand, ranges, opts=opts)
    if caught:
        logger.debug(f"nquad reported: {caught[0].message}")
    return value, err


# Finite differences -------------------------------------------------------

def _steps(x: np.ndarray, step: Optional[float], power: float) -> np.ndarray:
    if step is not None:
        return np.full(x.shape, float(step))
    return EPS ** power * np.maximum(1.0, np.abs(x))


def _eval(f: Callable, x: np.ndarray) -> float:
    value = float(f(x))
    if math.isnan(value) or math.isinf(value):
        raise NonFinite(f"function returned {value} at {x.tolist()}")
    return value


def gradient(f: Callable, x, step: Optional[float] = None) -> np.ndarray:
    """Central-difference gradient of a scalar function."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    h = _steps(x, step, 1.0 / 3.0)
    grad = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h[i]
        grad[i] = (_eval(f, x + e) - _eval(f, x - e)) / (2.0 * h[i])
    return grad


def hessian(f: Callable, x, step: Optional[float] = None) -> np.ndarray:
    """Central second differences, returned exactly symmetric."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    # second differences balance truncation and round-off at the fourth root
    h = _steps(x, step, 0.25)
    dim = x.size
    f0 = _eval(f, x)
    hess = np.zeros((dim, dim))
    for i in range(dim):
        ei = np.zeros(dim)
        ei[i] = h[i]
        hess[i, i] = (_eval(f, x + ei) - 2.0 * f0 + _eval(f, x - ei)) / (h[i] * h[i])
        for j in range(i + 1, dim):
            ej = np.zeros(dim)
            ej[j] = h[j]
            value = (_eval(f, x + ei + ej) - _eval(f, x + ei - ej)
                     - _eval(f, x - ei + ej) + _eval(f, x - ei - ej)) / (4.0 * h[i] * h[j])
            hess[i, j] = value
            hess[j, i] = value
    return hess


# Monte Carlo ----------------------------------------------------------------

def mc_expect(g: Callable, sampler: Callable, n: int, stream: RngStream) -> McEstimate:
    """Sample mean of g over n draws and its standard error sd/sqrt(n).

    `sampler(rng, size)` returns the draws; `g` is applied to the whole draw
    array and may return one value per draw or a row of values per draw.
    """
    if n < 2:
        raise ValueError("mc_expect needs n >= 2")
    draws = sampler(stream.generator(), n)
    values = np.asarray(g(draws), dtype=float)
    if not np.all(np.isfinite(values)):
        bad = int(np.count_nonzero(~np.isfinite(values)))
        raise NonFinite(f"{bad} non-finite values of g among {n} draws")
    mean = values.mean(axis=0)
    se = values.std(axis=0, ddof=1) / math.sqrt(n)
    return McEstimate(mean, se, n)


def variance_with_se(samples) -> tuple[float, float]:
    """Sample variance and its large-sample standard error sqrt((m4 - s^4) / N)."""
    x = np.asarray(samples, dtype=float)
    n = x.size
    centered = x - x.mean()
    var = float(centered.var(ddof=1))
    m4 = float(np.mean(centered ** 4))
    return var, math.sqrt(max(m4 - var * var, 0.0) / n)


def mean_with_se(samples) -> tuple[float, float]:
    x = np.asarray(samples, dtype=float)
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


def covariance_with_se(a, b) -> tuple[float, float]:
    """Sample covariance and the SE of the mean of the centred products."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    products = (a - a.mean()) * (b - b.mean())
    return float(products.sum() / (a.size - 1)), float(products.std(ddof=1) / math.sqrt(a.size))


def draw_chunked(draw: Callable, total: int, seed: int, chunk_size: Optional[int] = None,
                 jobs: int = 1) -> list:
    """Run `draw(rng, size)` over fixed-size chunks, chunk k on stream (seed, k).

    The chunk layout depends only on `total` and `chunk_size`, and results come
    back in chunk order, so the output is the same for any `jobs`.
    """
    chunk_size = chunk_size or settings.MC_CHUNK_SIZE
    sizes = [min(chunk_size, total - start) for start in range(0, total, chunk_size)]

    def run(k):
        return draw(RngStream(seed=seed, stream_id=k).generator(), sizes[k])

    if jobs <= 1 or len(sizes) == 1:
        return [run(k) for k in range(len(sizes))]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(run, range(len(sizes))))
