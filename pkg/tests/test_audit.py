import numpy as np
import pytest

from hlikelihood.audit import (
    audit,
    audit_point,
    bartlize_search,
    check_boundary,
    check_condition1,
    check_full_identities,
    parse_theta_grid,
)
from hlikelihood.exceptions import ConfigError, EmptyCatalogResult
from hlikelihood.items import BoxDomain, RngStream
from hlikelihood.models import get_model
from hlikelihood.models.base import JointModel

GRID = [np.array([0.5]), np.array([2.0])]


class SineWave(JointModel):
    """f_theta(v) = 1 + theta sin(2 pi v) on [0, 1]: equal, non-zero endpoint values."""

    name = "sine-wave"
    support_theta = BoxDomain.of((-0.9, 0.9))

    def support_v(self, theta=None):
        return BoxDomain.of((0.0, 1.0))

    def log_marg_v(self, theta, v):
        return np.log1p(theta[..., 0] * np.sin(2.0 * np.pi * v[..., 0]))

    def marg_derivatives(self, theta, v):
        t, x = np.broadcast_arrays(theta[..., 0], v[..., 0])
        s, c = np.sin(2.0 * np.pi * x), np.cos(2.0 * np.pi * x)
        f = 1.0 + t * s
        df = 2.0 * np.pi * t * c
        grad = np.stack([s / f, df / f], axis=-1)
        hess = np.empty(t.shape + (2, 2))
        hess[..., 0, 0] = -(s / f) ** 2
        hess[..., 0, 1] = hess[..., 1, 0] = 2.0 * np.pi * c / f ** 2
        hess[..., 1, 1] = (-4.0 * np.pi ** 2 * t * s * f - df ** 2) / f ** 2
        return grad, hess


@pytest.mark.parametrize('theta', [0.3, 1.0, 4.0])
def test_bayarri_natural_condition1_is_minus_theta(theta):
    value = check_condition1(get_model("bayarri"), [theta]).value
    np.testing.assert_allclose(value, [-theta], rtol=1e-6)


@pytest.mark.parametrize('name, verdict', [
    ("bayarri", "Fails"),
    ("bayarri-log", "Bartlized"),
    ("exp-future", "Fails"),
    ("exp-future-log", "Bartlized"),
    ("normal-future", "Bartlized"),
])
def test_audit_verdicts(name, verdict):
    m = get_model(name)
    grid = [np.array([0.5]), np.array([1.5])]
    report = audit(m, grid)
    assert report.verdicts == [verdict, verdict]
    assert report.theta_grid == [[0.5], [1.5]]


def test_bayarri_density_does_not_vanish_at_zero():
    faces = check_boundary(get_model("bayarri"), [2.0], order=1)
    lower = next(f for f in faces if f.face == "lower")
    upper = next(f for f in faces if f.face == "upper")
    assert lower.verdict == "NonVanishing"
    np.testing.assert_allclose(lower.limit, 2.0, rtol=1e-4)
    assert upper.verdict == "Vanishes"


def test_audit_point_explains_a_failure():
    point = audit_point(get_model("bayarri"), [2.0])
    assert point.verdict == "Fails"
    assert "does not vanish" in point.explanation
    np.testing.assert_allclose(point.boundary_difference, [-2.0], rtol=1e-4)


def test_log_scale_residuals_are_small():
    report = audit(get_model("bayarri-log"), GRID, jobs=2)
    assert report.worst_residual() < 1e-6


def test_monte_carlo_identities_need_a_seed():
    with pytest.raises(ConfigError):
        audit(get_model("bayarri-log"), GRID, n_mc=100)


def test_full_identities_hold_on_the_log_scale():
    m = get_model("bayarri-log")
    result = check_full_identities(m, [1.0], 20_000, RngStream(seed=4), n_obs=3)
    z = np.abs(np.asarray(result.score_mean)) / np.asarray(result.score_se)
    assert np.all(z < 5.0)


def test_bartlize_search_finds_the_log_scale():
    rankings = bartlize_search(get_model("bayarri"), GRID)
    assert [r.transform for r in rankings] == ["log"]
    assert rankings[0].worst_residual < 1e-6


def test_bartlize_search_with_nothing_that_works():
    with pytest.raises(EmptyCatalogResult):
        bartlize_search(get_model("bayarri"), GRID, catalog=("identity",))


@pytest.mark.parametrize('text, expected', [
    ("0.5:2:3", [0.5, 1.0, 2.0]),
    ("lin:0:1:3", [0.0, 0.5, 1.0]),
    ("1,2,3", [1.0, 2.0, 3.0]),
])
def test_parse_theta_grid(text, expected):
    grid = parse_theta_grid(text)
    np.testing.assert_allclose([point[0] for point in grid], expected)


@pytest.mark.parametrize('text, p', [("a:b", 1), ("1,2;3", 2), ("0.5:2", 1)])
def test_parse_theta_grid_errors(text, p):
    with pytest.raises(ConfigError):
        parse_theta_grid(text, p)


@pytest.mark.parametrize('theta', [0.2, 0.5, 0.8])
def test_equal_endpoint_density_is_bartlized(theta):
    point = audit_point(SineWave(), [theta])
    assert point.verdict == "Bartlized"
    faces = [f.verdict for f in point.boundary if f.order == 1]
    assert faces == ["EqualEndpoints", "EqualEndpoints"]
    assert "equal endpoint" in point.explanation
    np.testing.assert_allclose(point.cond2, [[0.0]], atol=1e-8)


def test_full_identities_on_the_natural_future_scale():
    result = check_full_identities(get_model("exp-future"), [1.0], 20_000, RngStream(seed=11), n_obs=3)
    # d log f / du = -1 / lambda for every draw
    np.testing.assert_allclose(result.score_mean[1], -1.0, rtol=1e-12)
    assert abs(result.block_a[0][0]) < 5.0 * result.block_a_se[0][0]
    assert abs(result.block_b[0][0] - 1.0) < 5.0 * result.block_b_se[0][0]
    np.testing.assert_allclose(result.block_c[0][0], 1.0, rtol=1e-12)
    assert result.first_holds is False


def test_log_scale_v_block_vanishes():
    result = check_full_identities(get_model("exp-future-log"), [1.0], 20_000, RngStream(seed=11), n_obs=3)
    np.testing.assert_allclose(result.block_c[0][0], 0.0, atol=5.0 * result.block_c_se[0][0] + 1e-12)


def test_audit_point_reports_monte_carlo_flags():
    point = audit_point(get_model("exp-future"), [1.0], n_mc=5_000, n_obs=3, stream=RngStream(seed=2))
    assert point.verdict == "Fails"
    assert point.full_identities.first_holds is False
