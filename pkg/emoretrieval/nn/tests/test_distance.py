from emoretrieval.nn.distance import (
    cosine_distance,
    cosine_distance_rows,
    cosine_similarity_matrix,
    cosine_similarity_matrix_backward,
)
from emoretrieval.gradcheck import numeric_gradient, relative_error
from emoretrieval.exceptions import ShapeError
import numpy as np
from numpy.testing import assert_allclose
import pytest


def test_cosine_distance():
    a = np.array([0.3, -1.2, 2.0])
    assert_allclose(cosine_distance(a, a), 0, atol=1e-12)
    assert_allclose(cosine_distance(a, -a), 2)
    assert_allclose(cosine_distance(np.array([1.0, 0.0]), np.array([1.0, 1.0])), 1 - 1 / np.sqrt(2))
    assert_allclose(cosine_distance(3.5 * a, np.ones(3)), cosine_distance(a, np.ones(3)))
    with pytest.raises(ShapeError):
        cosine_distance(np.ones(3), np.ones(2))


def test_cosine_distance_zero_vector():
    assert cosine_distance(np.zeros(3), np.ones(3)) == 1
    distance, grad_a, grad_b = cosine_distance_rows(np.zeros((1, 3)), np.ones((1, 3)))
    assert distance[0] == 1
    assert (grad_a == 0).all()
    assert (grad_b == 0).all()


@pytest.mark.parametrize("seed", range(100))
def test_cosine_distance_rows_gradient(seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(3, 4))
    b = rng.normal(size=(3, 4))
    _, grad_a, grad_b = cosine_distance_rows(a, b)

    def total():
        return cosine_distance_rows(a, b)[0].sum()

    assert relative_error(grad_a, numeric_gradient(total, a)) < 1e-6
    assert relative_error(grad_b, numeric_gradient(total, b)) < 1e-6


def test_cosine_similarity_matrix():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(3, 4))
    b = rng.normal(size=(5, 4))
    matrix = cosine_similarity_matrix(a, b)
    for i in range(3):
        for j in range(5):
            assert_allclose(matrix[i, j], 1 - cosine_distance(a[i], b[j]), atol=1e-12)


@pytest.mark.parametrize("seed", range(20))
def test_cosine_similarity_matrix_backward(seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(3, 4))
    b = rng.normal(size=(5, 4))
    weights = rng.normal(size=(3, 5))
    grad_a, grad_b = cosine_similarity_matrix_backward(a, b, weights)

    def total():
        return np.sum(cosine_similarity_matrix(a, b) * weights)

    assert relative_error(grad_a, numeric_gradient(total, a)) < 1e-6
    assert relative_error(grad_b, numeric_gradient(total, b)) < 1e-6
