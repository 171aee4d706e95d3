import numpy as np
import pytest
import scipy.sparse as sp

from src.constraint_blocks import (ConeConstraints, FunctionObjective, LinearConstraints, QuadraticObjective,
                                   SumObjective)


@pytest.fixture
def cone(rng):
    """Two cones over a 6-variable vector, one with a variable level"""
    n = 6
    idx = np.array([[[0, 1], [2, 3]], [[3, 4], [5, 5]]])
    coef = rng.normal(size=idx.shape)
    offset = rng.normal(size=(2, 2))
    return ConeConstraints(n, idx=idx, coef=coef, offset=offset, level_offset=np.array([5.0, 4.0]),
                           level_idx=np.array([[0], [1]]), level_coef=np.array([[0.5], [-0.3]]))


def test_cone_jacobian_matches_finite_differences(cone, rng, finite_difference):
    x = 0.3 * rng.normal(size=6)
    jac = cone.jacobian(x).toarray()
    for i in range(cone.size):
        fd = finite_difference(lambda y: cone.values(y)[i], x)
        np.testing.assert_allclose(jac[i], fd, rtol=1e-6, atol=1e-7)


def test_cone_weighted_hessian_matches_finite_differences(cone, rng, finite_difference):
    x = 0.3 * rng.normal(size=6)
    w = np.array([0.7, 1.9])
    hess = cone.weighted_hessian(x, w).toarray()
    for i in range(6):
        fd = finite_difference(lambda y: w @ (cone.jacobian(y).toarray()[:, i]), x)
        np.testing.assert_allclose(hess[i], fd, rtol=1e-5, atol=1e-6)
    np.testing.assert_allclose(hess, hess.T, atol=1e-12)


def test_cone_is_infinite_for_non_positive_level():
    block = ConeConstraints(2, idx=np.array([[[1]]]), coef=np.ones((1, 1, 1)), offset=np.zeros((1, 1)),
                            level_offset=np.zeros(1), level_idx=np.array([[0]]), level_coef=np.array([[1.0]]))
    assert np.isinf(block.values(np.array([-1.0, 0.0]))[0])
    assert block.values(np.array([2.0, 0.0]))[0] == pytest.approx(-2.0)


def test_cone_is_smooth_at_the_apex():
    block = ConeConstraints(2, idx=np.array([[[0], [1]]]), coef=np.ones((1, 2, 1)), offset=np.zeros((1, 2)),
                            level_offset=np.ones(1))
    x = np.zeros(2)
    assert block.values(x)[0] == -1.0
    np.testing.assert_array_equal(block.jacobian(x).toarray(), [[0.0, 0.0]])
    np.testing.assert_allclose(block.weighted_hessian(x, np.ones(1)).toarray(), 2 * np.eye(2))


def test_linear_from_rows():
    block = LinearConstraints.from_rows(3, [([0, 2], [1.0, -1.0], 4.0), (1, 2.0, 1.0)])
    np.testing.assert_allclose(block.G.toarray(), [[1, 0, -1], [0, 2, 0]])
    np.testing.assert_allclose(block.values(np.array([1.0, 1.0, 1.0])), [-4.0, 1.0])
    assert block.weighted_hessian(np.zeros(3), np.ones(2)) is None


def test_linear_rejects_mismatched_rhs():
    with pytest.raises(ValueError):
        LinearConstraints(np.eye(2), np.zeros(3))


def test_sum_objective_mixes_sparse_and_dense():
    P = sp.diags([2.0, 4.0])
    quad = QuadraticObjective(P, np.array([1.0, 0.0]))
    extra = FunctionObjective(lambda x: -x[0] ** 4, lambda x: np.array([-4 * x[0] ** 3, 0.0]),
                              lambda x: np.array([[-12 * x[0] ** 2, 0.0], [0.0, 0.0]]))
    total = SumObjective(quad, extra)
    x = np.array([0.5, -1.0])
    value, grad, hess = total.evaluate(x)
    assert value == pytest.approx(quad.value(x) + extra.value(x))
    np.testing.assert_allclose(grad, [1.0 - 1.0 - 0.5, 4.0])
    np.testing.assert_allclose(hess, [[-2.0 - 3.0, 0.0], [0.0, -4.0]])
