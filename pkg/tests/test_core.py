import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from easr.core import TrialSet, concat, eig_symmetric, inv_sqrtm, trial_covariance
from easr.errors import DegenerateCovariance, InvalidLabel, InvalidSignal, NotSymmetric


def gram_loops(x):
    c, t = x.shape
    out = np.zeros((c, c))
    for i in range(c):
        for j in range(c):
            s = 0.0
            for k in range(t):
                s += x[i, k] * x[j, k]
            out[i, j] = s
    return out


def test_trial_covariance_small_cases():
    np.testing.assert_array_equal(trial_covariance(np.eye(2)), np.eye(2))
    np.testing.assert_array_equal(trial_covariance(np.array([[1.0, 1.0], [0.0, 0.0]])),
                                  [[2.0, 0.0], [0.0, 0.0]])


def test_trial_covariance_matches_loops(rng):
    x = rng.standard_normal((4, 64))
    assert np.max(np.abs(trial_covariance(x) - gram_loops(x))) < 1e-12


def test_trial_covariance_rejects_nonfinite():
    x = np.ones((3, 8))
    x[1, 2] = np.nan
    with pytest.raises(InvalidSignal):
        trial_covariance(x)


@given(arrays(np.float64, (5, 20), elements=st.floats(-1e3, 1e3)))
def test_trial_covariance_is_psd(x):
    cov = trial_covariance(x)
    w = np.linalg.eigvalsh(cov)
    assert w.min() >= -1e-10 * max(w.max(), 1e-300) - 1e-12


def test_eig_textbook():
    w, v = eig_symmetric(np.diag([3.0, 1.0]))
    np.testing.assert_allclose(w, [3, 1])
    np.testing.assert_allclose(np.abs(v), np.eye(2), atol=1e-15)
    w, v = eig_symmetric(np.array([[2.0, 1.0], [1.0, 2.0]]))
    np.testing.assert_allclose(w, [3, 1], atol=1e-14)
    np.testing.assert_allclose(np.abs(v[:, 0]), [2 ** -0.5] * 2, atol=1e-14)
    np.testing.assert_allclose(v[0, 1] * v[1, 1], -0.5, atol=1e-14)


@given(st.integers(0, 2**32 - 1), st.integers(2, 12))
def test_eig_reconstruction(seed, c):
    a = np.random.default_rng(seed).standard_normal((c, c))
    m = a @ a.T + np.eye(c)
    w, v = eig_symmetric(m)
    assert np.all(np.diff(w) <= 0)
    assert np.max(np.abs(v @ np.diag(w) @ v.T - m)) < 1e-9 * np.abs(m).max()
    assert np.max(np.abs(v.T @ v - np.eye(c))) < 1e-10


def test_eig_rejects_asymmetric():
    with pytest.raises(NotSymmetric):
        eig_symmetric(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_inv_sqrtm_examples():
    np.testing.assert_allclose(inv_sqrtm(np.eye(3)), np.eye(3), atol=1e-15)
    np.testing.assert_allclose(inv_sqrtm(np.diag([4.0, 9.0])), np.diag([0.5, 1 / 3]), atol=1e-15)
    m = np.array([[2.0, 1.0], [1.0, 2.0]])
    r = inv_sqrtm(m)
    assert np.max(np.abs(r @ m @ r - np.eye(2))) < 1e-10
    np.testing.assert_array_equal(r, r.T)


def test_inv_sqrtm_against_scipy(rng):
    from scipy.linalg import fractional_matrix_power
    a = rng.standard_normal((6, 6))
    m = a @ a.T + 0.5 * np.eye(6)
    np.testing.assert_allclose(inv_sqrtm(m), fractional_matrix_power(m, -0.5).real, atol=1e-10)


@given(st.integers(0, 2**32 - 1), st.integers(2, 16), st.floats(-6, 6))
def test_inv_sqrtm_whitens(seed, c, log_scale):
    a = np.random.default_rng(seed).standard_normal((c, c))
    m = (a @ a.T + 0.1 * np.eye(c)) * 10.0 ** log_scale
    r = inv_sqrtm(m)
    assert np.max(np.abs(r @ m @ r - np.eye(c))) < 1e-8


def test_inv_sqrtm_floor_and_degenerate():
    with pytest.raises(DegenerateCovariance):
        inv_sqrtm(np.zeros((3, 3)))
    # rank-deficient input survives via the relative floor
    r = inv_sqrtm(np.diag([1.0, 0.0]))
    assert np.isfinite(r).all() and r[1, 1] == pytest.approx(1e5)


def test_trialset_validation_and_helpers(rng):
    X = rng.standard_normal((6, 3, 10))
    ts = TrialSet(X, [0, 1, 0, 1, 0, 1], [0, 0, 0, 1, 1, 1], [0, 0, 1, 0, 0, 1], 2, 100.0)
    assert ts.subjects() == [0, 1]
    assert ts.groups() == [(0, 0), (0, 1), (1, 0), (1, 1)]
    np.testing.assert_array_equal(ts.class_counts(), [3, 3])
    both = concat([ts.take([0, 1]), ts.take([2])])
    np.testing.assert_array_equal(both.X, X[:3])
    with pytest.raises(InvalidLabel):
        TrialSet(X, [0, 1, 2, 0, 0, 0], np.zeros(6), np.zeros(6), 2, 100.0)
    with pytest.raises(InvalidSignal):
        TrialSet(X[:, :1], np.zeros(6, int), np.zeros(6), np.zeros(6), 2, 100.0)
