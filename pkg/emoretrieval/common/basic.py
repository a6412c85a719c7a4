"""Vectorized math kernels"""
from numba import njit, vectorize, float64
from math import sqrt
import numpy as np

__all__ = ["va_similarity_kernel", "unique_first_mask", "hinge"]

SQRT2 = sqrt(2.0)


@vectorize([float64(float64, float64, float64, float64)])
def va_similarity_kernel(valence_a, arousal_a, valence_b, arousal_b):
    """Similarity of two points in the unit valence-arousal square.

    The Euclidean distance is normalised by the diagonal of the square, so the
    result is 1 for coincident points and 0 for opposite corners.
    """
    dv = valence_a - valence_b
    da = arousal_a - arousal_b
    return 1.0 - sqrt(dv * dv + da * da) / SQRT2


@vectorize([float64(float64)])
def hinge(x):
    """``max(0, x)`` with the subgradient convention that x == 0 is inactive"""
    return x if x > 0 else 0.0


@njit
def unique_first_mask(values):
    """Per row, retain the first column holding each distinct value.

    Parameters
    ----------
    values : ndarray
        2D array (N, M)

    Returns
    -------
    mask : ndarray
        Boolean array (N, M), True at the first occurrence (in column order)
        of every distinct value of the row
    """
    n_rows, n_cols = values.shape
    mask = np.zeros((n_rows, n_cols), dtype=np.bool_)
    for i in range(n_rows):
        for j in range(n_cols):
            seen = False
            for jj in range(j):
                if values[i, jj] == values[i, j]:
                    seen = True
                    break
            if not seen:
                mask[i, j] = True
    return mask
