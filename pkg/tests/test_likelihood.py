import numpy as np
import pytest

from hlikelihood.exceptions import NoInteriorMode, OutOfSupport, Unsupported
from hlikelihood.items import ObservedData, QuadratureSpec
from hlikelihood.likelihood import HLogLik, h_loglik, inner_mode, laplace_marginal, marginal_loglik
from hlikelihood.models import get_model


@pytest.mark.parametrize('name, theta', [
    ("exp-future-log", 2.0),
    ("exp-future", 0.7),
    ("bayarri", 1.5),
    ("bayarri-log", 0.4),
    ("normal-future", 0.3),
])
def test_marginal_loglik_matches_closed_form(name, theta, exp_data):
    m = get_model(name)
    theta = np.array([theta])
    np.testing.assert_allclose(marginal_loglik(m, exp_data, theta),
                               float(m.oracle.marginal_loglik(theta, exp_data)), rtol=1e-7)


def test_laplace_is_exact_for_the_normal_model(exp_data):
    m = get_model("normal-future")
    theta = np.array([0.3])
    np.testing.assert_allclose(laplace_marginal(m, exp_data, theta),
                               float(m.oracle.marginal_loglik(theta, exp_data)), rtol=1e-10)


@pytest.mark.parametrize('n', [5, 20, 80])
def test_laplace_gap_on_the_log_scale_is_constant_in_n(n):
    m = get_model("exp-future-log")
    data = ObservedData.of([1.3] * n)
    theta = np.array([1.3])
    gap = laplace_marginal(m, data, theta) - marginal_loglik(m, data, theta, QuadratureSpec(rel_tol=1e-11))
    np.testing.assert_allclose(gap, 0.5 * np.log(2.0 * np.pi) - 1.0, atol=1e-9)


def test_h_loglik_value():
    m = get_model("exp-future")
    data = ObservedData.of([1.0, 2.0, 3.0])
    # -(n+1) log 2 - (6 + 1) / 2
    np.testing.assert_allclose(h_loglik(m, data, [2.0], [1.0]), -4.0 * np.log(2.0) - 3.5)


def test_h_loglik_outside_support():
    m = get_model("exp-future")
    data = ObservedData.of([1.0, 2.0])
    with pytest.raises(OutOfSupport):
        h_loglik(m, data, [-1.0], [1.0])
    with pytest.raises(OutOfSupport):
        h_loglik(m, data, [1.0], [-1.0])


def test_inner_mode_on_the_natural_u_scale_sits_on_the_boundary(exp_data):
    with pytest.raises(NoInteriorMode):
        inner_mode(get_model("exp-future"), exp_data, [1.0])


def test_inner_mode_on_the_log_scale(exp_data):
    # h in v is v - e^v / lambda, maximized at v = log lambda
    result = inner_mode(get_model("exp-future-log"), exp_data, [2.5])
    np.testing.assert_allclose(result.x, [np.log(2.5)], atol=1e-8)


def test_hloglik_binds_model_and_data(exp_data):
    h = HLogLik(get_model("exp-future-log"), exp_data)
    grad, hess = h.derivatives([exp_data.mean], [np.log(exp_data.mean)])
    np.testing.assert_allclose(grad, [0.0, 0.0], atol=1e-10)
    assert hess.shape == (2, 2)
    with pytest.raises(Unsupported):
        HLogLik(get_model("exp-future-log"), ObservedData.of([-1.0, 2.0]))
