import math

import numpy as np
import pytest

from hlikelihood import numeric
from hlikelihood.exceptions import ConfigError, NotApplicable, Unsupported
from hlikelihood.items import Interval, ObservedData, RngStream
from hlikelihood.models import MODELS, get_model
from hlikelihood.models.transforms import IDENTITY, LogitTransform, LogTransform, make_transform


def test_registry_names_match_models():
    for name in MODELS:
        assert get_model(name).name == name


def test_unknown_model():
    with pytest.raises(ConfigError):
        get_model("poisson-gamma")


@pytest.mark.parametrize('name', sorted(MODELS))
def test_analytic_derivatives_match_finite_differences(name, exp_data):
    m = get_model(name)
    y = exp_data.array
    theta = np.atleast_1d(m.theta_from_natural(np.full(m.p, 1.3)))
    v = np.atleast_1d(m.v_start(theta, exp_data)) * 1.1
    p = m.p

    def h(phi):
        return float(m.h(phi[:p], phi[p:], y))

    phi = np.concatenate([theta, v])
    grad, hess = m.h_derivatives(theta, v, y)
    np.testing.assert_allclose(grad, numeric.gradient(h, phi), rtol=1e-6, atol=1e-6)
    np.testing.assert_allclose(hess, numeric.hessian(h, phi), rtol=1e-4, atol=1e-4)


@pytest.mark.parametrize('name, expected', [
    ("exp-future-log", [[5.0, -1.0], [-1.0, 1.0]]),
    ("exp-future", [[5.0, -1.0], [-1.0, 0.0]]),
    ("exp-future-log-eta", [[5.0, -1.0], [-1.0, 1.0]]),
])
def test_oracle_expected_hessian_at_lambda_one(name, expected):
    m = get_model(name)
    theta = m.theta_from_natural(np.array([1.0]))
    np.testing.assert_allclose(m.oracle.expected_hessian(theta, 4), expected)


def test_param_scale_switch_keeps_the_family():
    m = get_model("exp-future-log")
    assert m.with_param_scale("log").name == "exp-future-log-eta"
    assert m.with_param_scale("natural") is m
    np.testing.assert_allclose(m.with_param_scale("log").theta_from_natural([2.0]), [math.log(2.0)])


def test_normal_model_has_no_log_scale():
    with pytest.raises(NotApplicable):
        get_model("normal-future").with_param_scale("log")


def test_bayarri_natural_score_is_minus_theta():
    m = get_model("bayarri")
    score, jac = m.marginal_score(np.array([2.0]), np.array([0.7]))
    np.testing.assert_allclose(score, [-2.0])
    np.testing.assert_allclose(jac, [[0.0]])


def test_exponential_models_reject_non_positive_data():
    with pytest.raises(Unsupported):
        get_model("exp-future-log").check_data(ObservedData.of([1.0, 0.0, 2.0]))


def test_log_scale_sampler_is_log_of_natural_draws():
    natural, log_scale = get_model("exp-future"), get_model("exp-future-log")
    u = natural.sample_v(np.array([2.0]), 10, RngStream(seed=3).generator())
    v = log_scale.sample_v(np.array([2.0]), 10, RngStream(seed=3).generator())
    np.testing.assert_allclose(v, np.log(u))


def test_log_scale_support_is_the_real_line():
    axis = get_model("exp-future-log").support_v().axes[0]
    assert axis.lower == -math.inf and axis.upper == math.inf


def test_transforms():
    half_line = Interval(lower=1.0, upper=math.inf)
    log = make_transform("log", half_line)
    assert isinstance(log, LogTransform)
    np.testing.assert_allclose(log.forward(log.inverse(3.5)), 3.5)
    np.testing.assert_allclose(log.log_jac(0.4), 0.4)
    assert make_transform("identity", half_line) is IDENTITY
    logit = make_transform("logit", Interval(lower=0.0, upper=2.0))
    assert isinstance(logit, LogitTransform)
    np.testing.assert_allclose(logit.forward(0.0), 1.0)
    np.testing.assert_allclose(logit.d1(0.3), numeric.gradient(lambda w: float(logit.forward(w[0])), [0.3]),
                               rtol=1e-7)


@pytest.mark.parametrize('name, support', [
    ("log", Interval(lower=-math.inf, upper=math.inf)),
    ("logit", Interval(lower=0.0, upper=math.inf)),
    ("sqrt", Interval(lower=0.0, upper=1.0)),
])
def test_transform_not_applicable(name, support):
    with pytest.raises(NotApplicable):
        make_transform(name, support)
