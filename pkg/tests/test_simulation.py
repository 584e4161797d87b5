import math

import numpy as np
import pytest
from scipy import stats
from scipy.special import polygamma

from hlikelihood.exceptions import ImproperPosterior
from hlikelihood.items import ExperimentConfig
from hlikelihood.models import get_model
from hlikelihood.simulation import (
    PI2_6,
    _replicate,
    duality_check,
    posterior_var_term,
    r_term_study,
    run_coverage,
    scale_sensitivity_study,
)


def coverage_config(**overrides):
    values = dict(model="exp-future-log", n=10, replications=400, alphas=[0.1, 0.5],
                  methods=["pivotal", "posterior-flat", "hessian-normal"], seed=3)
    values.update(overrides)
    return ExperimentConfig(**values)


def test_pivotal_coverage_is_nominal():
    result = run_coverage(coverage_config())
    for alpha in (0.1, 0.5):
        row = result.row("pivotal", alpha, 10)
        assert row.replications == 400
        assert abs(row.coverage - (1.0 - alpha)) < 4.0 * math.sqrt(alpha * (1.0 - alpha) / 400)
        assert row.mean_width > 0.0


def test_flat_lambda_posterior_intervals_are_wider():
    result = run_coverage(coverage_config())
    assert result.row("posterior-flat", 0.1, 10).mean_width > result.row("pivotal", 0.1, 10).mean_width


def test_coverage_does_not_depend_on_jobs():
    cfg = coverage_config(replications=150, methods=["pivotal", "hessian-normal"])
    assert run_coverage(cfg, jobs=1) == run_coverage(cfg, jobs=3)


def test_coverage_depends_on_the_seed():
    a = run_coverage(coverage_config(replications=150, methods=["hessian-normal"], seed=1))
    b = run_coverage(coverage_config(replications=150, methods=["hessian-normal"], seed=2))
    assert a.rows[0].mean_width != b.rows[0].mean_width


def test_improper_method_is_skipped():
    result = run_coverage(coverage_config(n=1, replications=100, methods=["pivotal", "posterior-flat"]))
    assert {row.method for row in result.rows} == {"pivotal"}
    with pytest.raises(KeyError):
        result.row("posterior-flat", 0.1, 1)


def test_hessian_normal_intervals_undercover():
    result = run_coverage(coverage_config(replications=1000, alphas=[0.05], methods=["hessian-normal"]))
    row = result.row("hessian-normal", 0.05, 10)
    # tau2 = 1 + 1/n misses the pi^2/6 spread of log u around log lambda
    assert row.coverage < 0.92


def test_simulated_pivot_follows_the_pareto_law():
    m = get_model("exp-future-log")
    n = 8
    r = []
    for i in range(2000):
        v, data = _replicate(m, np.array([2.0]), n, 5, i)
        r.append(float(m.oracle.pivot(v[None, :], data)[0][0]))
    result = stats.kstest(r, lambda t: 1.0 - (1.0 + t / n) ** -n)
    assert result.pvalue > 1e-3


@pytest.mark.slow
def test_aphl_coverage_on_the_log_lambda_scale():
    result = run_coverage(coverage_config(methods=["aphl", "pivotal"], param_scale="log"))
    assert abs(result.row("aphl", 0.1, 10).coverage - result.row("pivotal", 0.1, 10).coverage) <= 0.01


def test_r_term_study_moments():
    study = r_term_study(ExperimentConfig(model="exp-future-log", n_grid=[5, 50], seed=6), n_mc=40_000)
    assert [row.n for row in study.rows] == [5, 50]
    for row in study.rows:
        assert abs(row.var_z - row.var_z_expected) < 5.0 * row.var_z_se
        assert abs(row.cov_theta_v - row.cov_expected) < 5.0 * row.cov_theta_v_se
        assert abs(row.var_log_y - PI2_6) < 5.0 * row.var_log_y_se
    assert study.euler_gamma == pytest.approx(0.5772156649)
    assert study.z_limit_ratio == pytest.approx(4.13, abs=0.01)
    assert study.z_limit_ratio_flagged


def test_posterior_var_term():
    assert posterior_var_term(5, "flat_lambda") == pytest.approx(float(polygamma(1, 4)))
    assert posterior_var_term(5, "flat_log_lambda") == pytest.approx(float(polygamma(1, 5)))
    with pytest.raises(ImproperPosterior):
        posterior_var_term(1, "flat_lambda")


def test_duality_check():
    results = duality_check(ExperimentConfig(model="exp-future-log", n_grid=[1, 5], seed=2), n_mc=40_000)
    assert [(r.n, r.prior) for r in results] == [(1, "flat_log_lambda"), (5, "flat_lambda"),
                                                 (5, "flat_log_lambda")]
    for r in results:
        assert abs(r.sampling_self_gap) < 5.0 * r.sampling_self_gap_se
        assert abs(r.sampling_var_term - float(polygamma(1, r.n))) < 5.0 * r.sampling_var_term_se
        assert r.posterior_total == pytest.approx(PI2_6 + r.posterior_var_term)


def test_scale_sensitivity_study():
    rows = scale_sensitivity_study(ExperimentConfig(model="exp-future-log", n_grid=[1, 5], seed=0))
    by_key = {(row.n, row.param_scale): row for row in rows}
    assert by_key[(1, "natural")].status == "ImproperPosterior"
    assert by_key[(1, "natural")].sup_h_vs_pivotal is None
    log5 = by_key[(5, "log")]
    assert max(log5.sup_h_vs_pivotal, log5.sup_h_vs_posterior, log5.sup_pivotal_vs_posterior) < 1e-6
    assert by_key[(5, "natural")].sup_h_vs_posterior < 1e-6
    assert by_key[(5, "natural")].sup_h_vs_pivotal > 1e-3
