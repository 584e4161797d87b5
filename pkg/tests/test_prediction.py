import math

import numpy as np
import pytest
from scipy import stats
from scipy.integrate import trapezoid

from hlikelihood.exceptions import ConfigError, HessianNotNegDef, ImproperPosterior, Unsupported
from hlikelihood.items import DensityGrid, Interval, ObservedData
from hlikelihood.models import bayarri_marginal, get_model
from hlikelihood.prediction import (
    _aphl_many,
    aphl,
    compare_triple,
    h_distribution,
    hdp_constant,
    hdp_interval,
    normalize_param_scale,
    pivotal_predictive,
    posterior_predictive_flat,
    posterior_predictive_grid,
    predict,
    profile_theta,
)


def ones(n):
    return ObservedData.of(np.ones(n))


def test_profile_theta_closed_form():
    # lambda(v) = (S + e^v) / (n + 1)
    np.testing.assert_allclose(profile_theta(get_model("exp-future-log"), ones(4), [math.log(2.0)]), [1.2])


def test_profile_theta_by_newton():
    m = bayarri_marginal(v_scale="log", param_scale="log")
    assert m.oracle is None
    # theta(u) = 1 / u, so log theta = -v
    np.testing.assert_allclose(profile_theta(m, ones(3), [0.3]), [-0.3], atol=1e-8)


@pytest.mark.parametrize('v', [-1.0, 0.0, 0.8])
def test_aphl_on_both_parameter_scales(v):
    m = get_model("exp-future-log")
    data = ObservedData.of([0.5, 1.5, 2.0, 1.0])
    n, s = data.n, data.total
    lam = (s + math.exp(v)) / (n + 1)
    h = -(n + 1) * math.log(lam) - (s + math.exp(v)) / lam + v
    np.testing.assert_allclose(aphl(m, data, [v]), h - 0.5 * math.log((n + 1) / lam**2), rtol=1e-10)
    np.testing.assert_allclose(aphl(m, data, [v], param_scale="log-lambda"), h - 0.5 * math.log(n + 1),
                               rtol=1e-10)


@pytest.mark.parametrize('v', [240.0, 251.19, 300.0])
def test_aphl_far_in_the_upper_tail(v):
    data = ones(10)
    log_lam = np.logaddexp(math.log(data.total), v) - math.log(data.n + 1)
    expected = -data.n * log_lam - (data.n + 1) + v - 0.5 * math.log(data.n + 1)
    assert aphl(get_model("exp-future-log"), data, [v]) == pytest.approx(expected, rel=1e-10)


def test_aphl_where_the_profile_overflows():
    m = get_model("exp-future-log")
    with pytest.raises(HessianNotNegDef):
        aphl(m, ones(10), [1000.0])
    values = _aphl_many(m, ones(10), np.array([[0.0], [1000.0]]), strict=False)
    assert np.isfinite(values[0])
    assert values[1] == -np.inf


def test_pivotal_law_values():
    m = get_model("exp-future-log")
    assert pivotal_predictive(m, ones(1)).pdf(1.0) == pytest.approx(0.25)
    assert posterior_predictive_flat(m, ones(2), "flat_lambda").pdf(0.0) == pytest.approx(0.5)
    assert posterior_predictive_flat(m, ones(2), "flat_log_lambda").pdf(1.0) == pytest.approx(
        pivotal_predictive(m, ones(2)).pdf(1.0))


def test_flat_lambda_posterior_is_improper_for_one_observation():
    m = get_model("exp-future-log")
    with pytest.raises(ImproperPosterior):
        posterior_predictive_flat(m, ones(1), "flat_lambda")
    with pytest.raises(ImproperPosterior):
        h_distribution(m, ones(1))


def test_unknown_prior():
    with pytest.raises(ConfigError):
        posterior_predictive_flat(get_model("exp-future-log"), ones(3), "jeffreys")


def test_bayarri_has_no_pivot():
    with pytest.raises(Unsupported):
        pivotal_predictive(get_model("bayarri-log"), ones(3))


def test_h_distribution_is_normalized():
    grid = h_distribution(get_model("exp-future-log"), ones(6), param_scale="log-lambda")
    assert grid.total_mass() == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize('n', [2, 5, 10, 50])
def test_lambda_scale_h_distribution_is_the_flat_lambda_posterior(n):
    _, dist = compare_triple(get_model("exp-future-log"), ones(n), param_scale="lambda")
    assert dist.sup_norm["h_vs_posterior"] < 1e-6
    assert dist.sup_norm["h_vs_pivotal"] > 1e-3


@pytest.mark.parametrize('n', [2, 5, 10, 50])
def test_log_lambda_scale_triple_coincides(n):
    triple, dist = compare_triple(get_model("exp-future-log"), ones(n), param_scale="log-lambda")
    assert triple.prior == "flat_log_lambda"
    assert triple.model == "exp-future-log-eta"
    assert max(dist.sup_norm.values()) < 1e-6
    assert max(dist.total_variation.values()) < 1e-6


def test_normal_triple_coincides(exp_data):
    _, dist = compare_triple(get_model("normal-future"), exp_data)
    assert max(dist.sup_norm.values()) < 1e-6


@pytest.mark.slow
def test_posterior_grid_matches_the_closed_form():
    m = get_model("exp-future-log")
    data = ObservedData.of([0.5, 1.5, 2.0, 1.0, 0.8])
    grid = posterior_predictive_grid(m, data, "flat_lambda", nodes=101)
    r = data.n * np.exp(grid.x) / data.total
    expected = stats.lomax(c=data.n - 1, scale=data.n).pdf(r) * r
    np.testing.assert_allclose(grid.density(), expected, atol=1e-5)


def test_hdp_constant():
    assert hdp_constant(0.05, 10) == pytest.approx(3.4934, abs=1e-3)
    assert hdp_constant(0.05, 1) == pytest.approx(19.0)


def test_hdp_of_the_pivotal_law_is_one_sided():
    interval = hdp_interval(stats.lomax(c=10, scale=10), 0.05)
    assert interval.lower == 0.0
    assert interval.upper == pytest.approx(hdp_constant(0.05, 10), rel=1e-10)
    assert interval.c == interval.upper


def test_hdp_of_a_symmetric_law():
    interval = hdp_interval(stats.norm(), 0.05)
    np.testing.assert_allclose([interval.lower, interval.upper], [-1.959964, 1.959964], atol=1e-5)


@pytest.mark.parametrize('alpha', [0.0, -0.1, 1.5])
def test_hdp_alpha_range(alpha):
    with pytest.raises(ConfigError):
        hdp_interval(stats.norm(), alpha)


def test_hdp_with_alpha_one_is_degenerate():
    interval = hdp_interval(stats.norm(), 1.0)
    assert interval.lower == interval.upper
    assert interval.level == 0.0


def test_grid_hdp_of_a_decreasing_density():
    x = np.linspace(0.0, 40.0, 20001)
    grid = DensityGrid(support=Interval(lower=0.0, upper=math.inf), nodes=x.tolist(),
                       log_density=(-x).tolist(), log_normalizer=0.0)
    interval = hdp_interval(grid, 0.05)
    assert interval.lower == 0.0
    assert interval.upper == pytest.approx(-math.log(0.05), abs=1e-3)


def test_grid_hdp_of_a_bimodal_density():
    x = np.linspace(-6.0, 6.0, 4001)
    f = 0.5 * stats.norm.pdf(x, -3.0, 0.5) + 0.5 * stats.norm.pdf(x, 3.0, 0.5)
    grid = DensityGrid(support=Interval(lower=-math.inf, upper=math.inf), nodes=x.tolist(),
                       log_density=np.log(f).tolist(), log_normalizer=math.log(trapezoid(f, x)))
    interval = hdp_interval(grid, 0.1)
    assert len(interval.intervals) == 2
    assert interval.covers(-3.0) and interval.covers(3.0)
    assert not interval.covers(0.0)


def test_predict_log_lambda_scale():
    data = ObservedData.of([2.0] * 10)
    prediction = predict(get_model("exp-future-log"), data, param_scale="log-lambda", alpha=0.05)
    c = hdp_constant(0.05, 10)
    for key in ("pivotal", "posterior", "h_dist"):
        assert prediction.hdp[key].upper == pytest.approx(c, rel=1e-3)
    # r = n u / S, so u = 2 r here
    lower, upper = prediction.hdp_observation["pivotal"]
    assert lower == pytest.approx(0.0, abs=1e-12)
    assert upper == pytest.approx(2.0 * c, rel=1e-10)


@pytest.mark.parametrize('text, expected', [
    ("lambda", "natural"), ("log-lambda", "log"), ("log_lambda", "log"), ("eta", "log"),
])
def test_param_scale_aliases(text, expected):
    assert normalize_param_scale(text) == expected


def test_unknown_param_scale():
    with pytest.raises(ConfigError):
        normalize_param_scale("sqrt")
