import math

import numpy as np
import pytest
from scipy.special import polygamma

from hlikelihood.estimation import (
    expected_hessian,
    inverse_information,
    marginal_mle,
    observed_vs_expected,
    r_term_decomposition,
    sampling_moments,
    solve_mhle,
)
from hlikelihood.exceptions import ConfigError, NotApplicable, OutOfSupport
from hlikelihood.items import ObservedData, RngStream
from hlikelihood.models import get_model


def test_log_scale_mhle_is_the_sample_mean(exp_data):
    sol = solve_mhle(get_model("exp-future-log"), exp_data)
    assert sol.status == "Converged"
    np.testing.assert_allclose(sol.theta.values, [exp_data.mean], rtol=1e-10)
    np.testing.assert_allclose(np.exp(sol.v.values), [exp_data.mean], rtol=1e-10)
    assert sol.expected_pd
    assert sol.theta.scale_labels == ["natural"]
    assert sol.v.scale_label == "log"


def test_eta_scale_mhle(exp_data):
    sol = solve_mhle(get_model("exp-future-log-eta"), exp_data)
    np.testing.assert_allclose(sol.theta.values, [math.log(exp_data.mean)], rtol=1e-10)
    assert sol.theta.scale_labels == ["log"]


def test_natural_u_mhle_has_no_interior_mode(exp_data):
    sol = solve_mhle(get_model("exp-future"), exp_data)
    assert sol.status in ("NoInteriorMode", "Diverged")
    assert sol.expected_pd is False
    assert sol.inverse_expected is None


def test_bayarri_natural_mhle_matches_closed_form(exp_data):
    m = get_model("bayarri")
    theta, v = m.oracle.exact_mhle(exp_data)
    sol = solve_mhle(m, exp_data)
    assert sol.status == "Converged"
    np.testing.assert_allclose(sol.theta.values, theta, rtol=1e-8)
    np.testing.assert_allclose(sol.v.values, v, rtol=1e-8)


def test_bayarri_natural_mhle_with_one_observation_diverges():
    sol = solve_mhle(get_model("bayarri"), ObservedData.of([1.3]))
    assert sol.status == "Diverged"
    assert sol.theta.values[0] > 1.3


def test_start_outside_support(exp_data):
    with pytest.raises(OutOfSupport):
        solve_mhle(get_model("exp-future-log"), exp_data, init=([-1.0], [0.0]))


def test_inverse_information():
    inverse, pd = inverse_information([[5.0, -1.0], [-1.0, 1.0]])
    assert pd
    np.testing.assert_allclose(inverse, [[0.25, 0.25], [0.25, 1.25]], atol=1e-12)
    assert inverse_information([[5.0, -1.0], [-1.0, 0.0]]) == (None, False)


def test_monte_carlo_expected_hessian_agrees_with_closed_form():
    m = get_model("exp-future-log")
    closed = expected_hessian(m, [1.0], 4)
    assert closed.method == "closed-form"
    mc = expected_hessian(m, [1.0], 4, n_mc=40_000, stream=RngStream(seed=2, stream_id=1))
    assert mc.method == "monte-carlo"
    z = np.abs(mc.array - closed.array) / np.maximum(np.asarray(mc.se), 1e-12)
    assert np.all(z < 5.0)


def test_monte_carlo_expected_hessian_needs_a_stream():
    with pytest.raises(ConfigError):
        expected_hessian(get_model("exp-future-log"), [1.0], 4, n_mc=100)


def test_observed_information_equals_expected_at_the_mhle(exp_data):
    m = get_model("exp-future-log")
    sol = solve_mhle(m, exp_data)
    assert observed_vs_expected(m, exp_data, sol) < 1e-8


def test_r_term_decomposition_adds_up(exp_data):
    m = get_model("exp-future-log")
    sol = solve_mhle(m, exp_data)
    split = r_term_decomposition(m, exp_data, [0.2], sol, theta_true=[2.0])
    assert split.hessian_point == "true_theta"
    np.testing.assert_allclose(np.add(split.leading, split.remainder),
                               np.subtract(split.phi_hat, split.phi_true), atol=1e-12)


def test_sampling_moments_against_exact_variance():
    m = get_model("exp-future-log")
    moments = sampling_moments(m, [1.0], 20, 200_000, seed=3)
    assert moments.var_v_exact == pytest.approx(float(polygamma(1, 20)) + math.pi**2 / 6.0)
    assert abs(moments.var_v - moments.var_v_exact) < 5.0 * moments.var_v_se
    assert abs(moments.cov_theta_v - 1.0 / 20) < 5.0 * moments.cov_theta_v_se
    assert moments.tau2_v == pytest.approx(1.05)


def test_sampling_moments_do_not_depend_on_jobs():
    m = get_model("exp-future-log")
    a = sampling_moments(m, [1.0], 5, 250_000, seed=8, jobs=1)
    b = sampling_moments(m, [1.0], 5, 250_000, seed=8, jobs=3)
    assert a == b


def test_sampling_moments_need_the_log_scale_model():
    with pytest.raises(NotApplicable):
        sampling_moments(get_model("exp-future"), [1.0], 5, 1000, seed=1)


@pytest.mark.slow
def test_marginal_mle_of_the_exponential_mean():
    data = ObservedData.of([0.4, 1.9, 1.1, 2.6, 0.7])
    fit = marginal_mle(get_model("exp-future-log"), data)
    np.testing.assert_allclose(fit.theta.values, [data.mean], rtol=1e-4)
