"""Ranking statistics used by the retrieval metrics"""
from numba import njit
from scipy.stats import spearmanr
from typing import Sequence, Tuple
import numpy as np

__all__ = ["dcg_at_k", "ideal_dcg_at_k", "row_spearman", "mean_std", "format_mean_std"]


@njit
def dcg_at_k(gains, k):
    """Discounted cumulative gain with linear gains, rel_i / log2(i + 1) for
    the 1-based rank i, truncated at k

    Parameters
    ----------
    gains : ndarray
        Graded relevance of the ranked candidates, in ranking order
    k : int
        Cut-off rank

    Returns
    -------
    float
    """
    total = 0.0
    n = min(k, gains.size)
    for i in range(n):
        total += gains[i] / np.log2(i + 2.0)
    return total


def ideal_dcg_at_k(gains: np.ndarray, k: int) -> float:
    """DCG of the best possible ordering of all ``gains``"""
    return dcg_at_k(np.sort(np.asarray(gains, dtype=np.float64))[::-1].copy(), k)


def row_spearman(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Spearman rank correlation between matching rows of two matrices.

    Rows where either side is constant have an undefined correlation and are
    returned as NaN.
    """
    if a.shape != b.shape:
        raise ValueError(f"Shape mismatch: {a.shape} vs {b.shape}")
    result = np.full(a.shape[0], np.nan)
    for i in range(a.shape[0]):
        if np.ptp(a[i]) == 0 or np.ptp(b[i]) == 0:
            continue
        result[i] = spearmanr(a[i], b[i]).correlation
    return result


def mean_std(values: Sequence[float]) -> Tuple[float, float]:
    """Mean and population standard deviation"""
    values = np.asarray(values, dtype=np.float64)
    return float(values.mean()), float(values.std())


def format_mean_std(values: Sequence[float], decimals: int = 2) -> str:
    """Format as ``mean±std``"""
    mean, std = mean_std(values)
    return f"{mean:.{decimals}f}±{std:.{decimals}f}"
