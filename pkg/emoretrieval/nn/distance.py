"""Cosine distance and similarity with their gradients"""
import logging
from typing import Tuple
import numpy as np

from emoretrieval.exceptions import ShapeError

__all__ = [
    "cosine_distance",
    "cosine_distance_rows",
    "cosine_similarity_matrix",
    "cosine_similarity_matrix_backward",
]

logger = logging.getLogger(__name__)

_zero_vector_logged = False


def _log_zero_vector():
    global _zero_vector_logged
    if not _zero_vector_logged:
        logger.warning(
            "Zero vector encountered in cosine distance; treated as orthogonal "
            "(distance 1, zero gradient)"
        )
        _zero_vector_logged = True


def cosine_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine distance ``1 - a.b / (|a| |b|)``, in [0, 2].

    A zero vector is treated as orthogonal to everything (distance 1).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ShapeError(f"Cannot compare vectors of shape {a.shape} and {b.shape}")
    distance, _, _ = cosine_distance_rows(a[None], b[None])
    return float(distance[0])


def cosine_distance_rows(
    a: np.ndarray, b: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Row-wise cosine distance between two matrices, with the gradient of
    every distance with respect to its own rows

    Parameters
    ----------
    a : ndarray
        Shape (n, d)
    b : ndarray
        Shape (n, d)

    Returns
    -------
    distance : ndarray
        Shape (n,), distance[i] = D(a[i], b[i])
    grad_a : ndarray
        Shape (n, d), dD(a[i], b[i]) / da[i]
    grad_b : ndarray
        Shape (n, d), dD(a[i], b[i]) / db[i]
    """
    if a.shape != b.shape or a.ndim != 2:
        raise ShapeError(f"Cannot compare rows of shape {a.shape} and {b.shape}")
    norm_a = np.linalg.norm(a, axis=1)
    norm_b = np.linalg.norm(b, axis=1)
    valid = (norm_a > 0) & (norm_b > 0)
    if not valid.all():
        _log_zero_vector()

    distance = np.ones(a.shape[0])
    grad_a = np.zeros_like(a)
    grad_b = np.zeros_like(b)
    if valid.any():
        av, bv = a[valid], b[valid]
        na, nb = norm_a[valid, None], norm_b[valid, None]
        cos = np.sum(av * bv, axis=1, keepdims=True) / (na * nb)
        cos = np.clip(cos, -1.0, 1.0)
        distance[valid] = 1.0 - cos[:, 0]
        grad_a[valid] = -(bv / (na * nb) - cos * av / na ** 2)
        grad_b[valid] = -(av / (na * nb) - cos * bv / nb ** 2)
    return distance, grad_a, grad_b


def cosine_similarity_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise cosine similarity, shape (len(a), len(b)). Pairs involving a
    zero vector have similarity 0."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ShapeError(f"Cannot compare rows of shape {a.shape} and {b.shape}")
    norm_a = np.linalg.norm(a, axis=1)
    norm_b = np.linalg.norm(b, axis=1)
    if (norm_a == 0).any() or (norm_b == 0).any():
        _log_zero_vector()
    inv_a = np.divide(1.0, norm_a, out=np.zeros_like(norm_a), where=norm_a > 0)
    inv_b = np.divide(1.0, norm_b, out=np.zeros_like(norm_b), where=norm_b > 0)
    return np.clip((a * inv_a[:, None]) @ (b * inv_b[:, None]).T, -1.0, 1.0)


def cosine_similarity_matrix_backward(
    a: np.ndarray, b: np.ndarray, grad: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """Gradients with respect to ``a`` and ``b`` of a scalar loss, given
    ``grad`` = dLoss/dC where C = cosine_similarity_matrix(a, b)"""
    norm_a = np.linalg.norm(a, axis=1)
    norm_b = np.linalg.norm(b, axis=1)
    inv_a = np.divide(1.0, norm_a, out=np.zeros_like(norm_a), where=norm_a > 0)
    inv_b = np.divide(1.0, norm_b, out=np.zeros_like(norm_b), where=norm_b > 0)
    a_hat = a * inv_a[:, None]
    b_hat = b * inv_b[:, None]
    cos = a_hat @ b_hat.T

    # dC_ij/da_i = (b_hat_j - C_ij a_hat_i) / |a_i|
    grad_a_hat = grad @ b_hat
    grad_a = (grad_a_hat - np.sum(grad * cos, axis=1)[:, None] * a_hat) * inv_a[:, None]
    grad_b_hat = grad.T @ a_hat
    grad_b = (grad_b_hat - np.sum(grad * cos, axis=0)[:, None] * b_hat) * inv_b[:, None]
    return grad_a, grad_b
