import math

import numpy as np
import pytest

from hlikelihood import optimize


def quadratic():
    def fun(x):
        return -(x[0] - 1.0) ** 2 - 2.0 * (x[1] + 2.0) ** 2

    def derivs(x):
        grad = np.array([-2.0 * (x[0] - 1.0), -4.0 * (x[1] + 2.0)])
        return grad, np.diag([-2.0, -4.0])

    return fun, derivs


def test_concave_quadratic_converges():
    fun, derivs = quadratic()
    result = optimize.maximize(fun, derivs, [0.0, 0.0], [-math.inf] * 2, [math.inf] * 2)
    assert result.status == optimize.CONVERGED
    np.testing.assert_allclose(result.x, [1.0, -2.0], atol=1e-10)


def test_maximum_on_a_finite_face_is_reported_as_boundary():
    result = optimize.maximize(lambda x: -x[0], lambda x: (np.array([-1.0]), np.zeros((1, 1))),
                               [1.0], [0.0], [math.inf])
    assert result.status == optimize.BOUNDARY
    assert result.x[0] == 0.0


def test_unbounded_ascent_is_reported_as_divergence():
    result = optimize.maximize(lambda x: x[0], lambda x: (np.array([1.0]), np.zeros((1, 1))),
                               [1.0], [0.0], [math.inf], diverged=lambda x: x[0] > 1e6)
    assert result.status == optimize.DIVERGED


def test_iteration_budget():
    def fun(x):
        return -math.cosh(x[0])

    def derivs(x):
        return np.array([-math.sinh(x[0])]), np.array([[-math.cosh(x[0])]])

    result = optimize.maximize(fun, derivs, [3.0], [-math.inf], [math.inf], max_iter=1)
    assert result.status == optimize.MAX_ITER


def test_starting_point_must_be_finite():
    with pytest.raises(ValueError):
        optimize.maximize(lambda x: -math.inf, lambda x: (np.zeros(1), np.zeros((1, 1))),
                          [0.0], [-1.0], [1.0])
