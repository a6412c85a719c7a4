from emoretrieval.common.stats import (
    dcg_at_k,
    ideal_dcg_at_k,
    row_spearman,
    mean_std,
    format_mean_std,
)
from scipy.stats import spearmanr
import numpy as np
from numpy.testing import assert_allclose as allclose


def test_dcg_at_k():
    gains = np.array([1.0, 0.5, 0.25])
    expected = 1.0 + 0.5 / np.log2(3) + 0.25 / np.log2(4)
    allclose(dcg_at_k(gains, 3), expected)
    allclose(dcg_at_k(gains, 1), 1.0)
    allclose(dcg_at_k(gains, 10), expected)
    assert dcg_at_k(np.zeros(5), 5) == 0


def test_ideal_dcg_at_k():
    gains = np.array([0.25, 1.0, 0.5])
    allclose(ideal_dcg_at_k(gains, 3), dcg_at_k(np.array([1.0, 0.5, 0.25]), 3))
    allclose(ideal_dcg_at_k(gains, 1), 1.0)


def test_row_spearman():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(5, 10))
    b = rng.normal(size=(5, 10))
    result = row_spearman(a, b)
    for i in range(5):
        allclose(result[i], spearmanr(a[i], b[i]).correlation)
    a[2] = 1
    assert np.isnan(row_spearman(a, b)[2])


def test_mean_std():
    mean, std = mean_std([0.86, 0.9, 0.94])
    allclose(mean, 0.9)
    allclose(std, np.std([0.86, 0.9, 0.94]))
    assert format_mean_std([0.86, 0.9, 0.94]) == "0.90±0.03"
    assert format_mean_std([1.0]) == "1.00±0.00"
