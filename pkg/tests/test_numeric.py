import math

import numpy as np
import pytest
from scipy import stats
from scipy.special import gammaln

from hlikelihood import numeric
from hlikelihood.exceptions import NonFinite, Unsupported
from hlikelihood.items import BoxDomain, RngStream

INF = math.inf


@pytest.mark.parametrize('bounds, f, expected', [
    (((-INF, INF),), lambda x: stats.norm.pdf(x[0]), 1.0),
    (((0.0, INF),), lambda x: math.exp(-x[0]), 1.0),
    (((-INF, 0.0),), lambda x: math.exp(2.0 * x[0]), 0.5),
    (((0.0, 1.0),), lambda x: x[0] ** 2, 1.0 / 3.0),
    (((0.0, INF), (0.0, INF)), lambda x: math.exp(-x[0] - x[1]), 1.0),
])
def test_integrate_known_values(bounds, f, expected):
    result = numeric.integrate(f, BoxDomain.of(*bounds))
    np.testing.assert_allclose(result.value, expected, rtol=1e-7)
    assert result.error >= 0.0


def test_integrate_rejects_more_than_three_dimensions():
    domain = BoxDomain.of(*[(0.0, 1.0)] * 4)
    with pytest.raises(Unsupported):
        numeric.integrate(lambda x: 1.0, domain)


def test_integrate_flags_non_finite_integrand():
    with pytest.raises(NonFinite):
        numeric.integrate(lambda x: math.nan, BoxDomain.of((0.0, 1.0)))


@pytest.mark.parametrize('logf, bounds, expected', [
    (lambda x: -0.5 * x[0] ** 2, (-INF, INF), 0.5 * math.log(2.0 * math.pi)),
    (lambda x: 9.0 * math.log(x[0]) - x[0] if x[0] > 0 else -INF, (0.0, INF), float(gammaln(10.0))),
    (lambda x: -1000.0 - x[0], (0.0, INF), -1000.0),
])
def test_log_integrate_known_values(logf, bounds, expected):
    result = numeric.log_integrate(logf, BoxDomain.of(bounds))
    np.testing.assert_allclose(result.value, expected, rtol=1e-8, atol=1e-8)


def test_log_integrate_rejects_empty_integrand():
    with pytest.raises(NonFinite):
        numeric.log_integrate(lambda x: -INF, BoxDomain.of((0.0, 1.0)))


def test_gradient_and_hessian_of_a_cubic():
    def f(x):
        return x[0] ** 2 * x[1] + 3.0 * x[1] ** 3

    x = np.array([1.5, -0.5])
    np.testing.assert_allclose(numeric.gradient(f, x), [2.0 * 1.5 * -0.5, 1.5 ** 2 + 9.0 * 0.25], rtol=1e-8)
    hess = numeric.hessian(f, x)
    np.testing.assert_allclose(hess, [[-1.0, 3.0], [3.0, -9.0]], rtol=1e-6, atol=1e-6)
    assert np.array_equal(hess, hess.T)


def test_gradient_with_fixed_step():
    np.testing.assert_allclose(numeric.gradient(lambda x: math.sin(x[0]), [0.3], step=1e-5),
                               [math.cos(0.3)], rtol=1e-9)


def test_derivatives_refuse_non_finite_values():
    with pytest.raises(NonFinite):
        numeric.gradient(lambda x: math.log(x[0]) if x[0] > 0 else -INF, [0.0])


def test_rng_stream_is_reproducible_and_streams_differ():
    a = RngStream(seed=7, stream_id=3).generator().standard_normal(5)
    b = RngStream(seed=7, stream_id=3).generator().standard_normal(5)
    c = RngStream(seed=7, stream_id=4).generator().standard_normal(5)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    assert RngStream(seed=7).substream(4) == RngStream(seed=7, stream_id=4)


def test_mc_expect_exponential_mean():
    est = numeric.mc_expect(lambda x: x, lambda rng, n: rng.exponential(2.0, size=n), 50_000,
                            RngStream(seed=11))
    assert est.n == 50_000
    assert abs(float(est.mean) - 2.0) < 4.0 * float(est.se)


def test_mc_expect_needs_two_draws():
    with pytest.raises(ValueError):
        numeric.mc_expect(lambda x: x, lambda rng, n: rng.random(n), 1, RngStream(seed=1))


def test_mc_expect_reports_non_finite_values():
    with pytest.raises(NonFinite):
        numeric.mc_expect(np.log, lambda rng, n: np.zeros(n), 10, RngStream(seed=1))


def test_variance_and_covariance_with_se():
    rng = RngStream(seed=5).generator()
    x = rng.standard_normal(40_000)
    var, var_se = numeric.variance_with_se(x)
    assert abs(var - 1.0) < 4.0 * var_se
    cov, cov_se = numeric.covariance_with_se(x, 2.0 * x)
    np.testing.assert_allclose(cov, 2.0 * var, rtol=1e-12)
    mean, mean_se = numeric.mean_with_se(x)
    assert abs(mean) < 4.0 * mean_se


@pytest.mark.parametrize('jobs', [2, 3])
def test_draw_chunked_does_not_depend_on_jobs(jobs):
    def draw(rng, size):
        return rng.standard_normal(size)

    serial = numeric.draw_chunked(draw, 2500, seed=9, chunk_size=1000, jobs=1)
    parallel = numeric.draw_chunked(draw, 2500, seed=9, chunk_size=1000, jobs=jobs)
    assert [len(chunk) for chunk in serial] == [1000, 1000, 500]
    np.testing.assert_array_equal(np.concatenate(serial), np.concatenate(parallel))
