import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import pompkit as pk
from pompkit import (
    FilteringFailure,
    RngStream,
    multinomial_resample,
    normalize_log_weights,
    normalize_weights,
    systematic_resample,
)


def test_normalize_uniform():
    w, log_mean = normalize_weights(np.array([1.0, 1.0, 1.0, 1.0]))
    assert np.allclose(w, 0.25)
    assert log_mean == 0.0


def test_normalize_degenerate():
    w, log_mean = normalize_weights(np.array([2.0, 0.0, 0.0, 0.0]))
    assert np.allclose(w, [1, 0, 0, 0])
    assert np.isclose(log_mean, np.log(0.5))


def test_normalize_all_zero_raises():
    with pytest.raises(FilteringFailure):
        normalize_weights(np.zeros(3))
    with pytest.raises(FilteringFailure):
        normalize_log_weights(np.full(3, -np.inf))


def test_normalize_rejects_nan_and_negative():
    with pytest.raises(pk.ModelContractError):
        normalize_weights(np.array([1.0, -1.0]))
    with pytest.raises(pk.ModelContractError):
        normalize_log_weights(np.array([0.0, np.nan]))


def test_log_normalization_matches_linear_after_shift():
    logw = np.array([-700.0, -701.0, -702.5])
    w, log_mean = normalize_log_weights(logw)
    direct = np.exp(logw - logw.max())
    assert np.allclose(w, direct / direct.sum())
    assert np.isclose(log_mean, logw.max() + np.log(direct.sum() / 3))


@given(
    st.lists(st.floats(min_value=1e-6, max_value=1e6), min_size=2, max_size=40),
    st.floats(min_value=1e-3, max_value=1e3),
)
@settings(max_examples=60, deadline=None)
def test_normalize_scaling_invariance(ws, c):
    w = np.array(ws)
    w1, lm1 = normalize_weights(w)
    w2, lm2 = normalize_weights(c * w)
    assert np.allclose(w1, w2)
    assert np.isclose(lm2, lm1 + np.log(c))


def test_systematic_point_mass():
    idx = systematic_resample(np.array([0.0, 1.0, 0.0]), RngStream(1))
    assert np.array_equal(idx, [1, 1, 1])


def test_systematic_uniform_is_permutation():
    idx = systematic_resample(np.full(4, 0.25), RngStream(2))
    assert np.array_equal(np.sort(idx), np.arange(4))


@given(st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=2, max_size=30), st.integers(0, 2**32))
@settings(max_examples=60, deadline=None)
def test_systematic_counts_within_one_of_expected(ws, seed):
    w = np.array(ws) + 1e-9
    w = w / w.sum()
    idx = systematic_resample(w, RngStream(seed))
    counts = np.bincount(idx, minlength=len(w))
    assert np.all(np.abs(counts - len(w) * w) < 1.0)
    assert np.all(np.diff(idx) >= 0)


def test_systematic_monte_carlo_fractions():
    # J = 1000 draws from a 3-point weight vector, averaged over many seeds.
    w = np.array([0.5, 0.3, 0.2])
    counts = np.zeros(3)
    root = RngStream(77)
    reps = 10_000
    for k in range(reps):
        counts += np.bincount(systematic_resample(w, root.substream(k), n=1000), minlength=3)
    assert np.all(np.abs(counts / counts.sum() - w) < 0.01)


def test_multinomial_point_mass_and_expected_counts():
    idx = multinomial_resample(np.array([0.0, 1.0, 0.0]), RngStream(4))
    assert np.array_equal(idx, [1, 1, 1])
    w = np.array([0.5, 0.3, 0.2])
    total = np.zeros(3)
    root = RngStream(88)
    for k in range(500):
        total += np.bincount(multinomial_resample(w, root.substream(k), n=1000), minlength=3)
    assert np.all(np.abs(total / total.sum() - w) < 0.01)
    assert np.all(np.diff(multinomial_resample(w, RngStream(5), n=50)) >= 0)
