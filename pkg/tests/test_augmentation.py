import numpy as np
import pytest
from hypothesis import given, strategies as st

from easr.augmentation import SRAugmenter, augment_batch, make_scheme, reconstruct
from easr.errors import EmptyClass, InvalidSegmentation


def test_equal_width_boundaries():
    assert make_scheme(12, 12).boundaries == tuple(range(13))
    assert make_scheme(10, 3).boundaries == (0, 3, 6, 10)
    with pytest.raises(InvalidSegmentation):
        make_scheme(5, 6)


def test_random_cuts_are_valid():
    for seed in range(1000):
        b = make_scheme(100, 12, "random_cuts", np.random.default_rng(seed)).boundaries
        assert len(b) == 13 and b[0] == 0 and b[-1] == 100
        assert all(hi > lo for lo, hi in zip(b, b[1:]))


@given(st.integers(1, 300), st.data())
def test_scheme_partitions_time(t, data):
    s = data.draw(st.integers(1, t))
    mode = data.draw(st.sampled_from(["equal_width", "random_cuts"]))
    scheme = make_scheme(t, s, mode, np.random.default_rng(data.draw(st.integers(0, 999))))
    covered = np.concatenate([np.arange(lo, hi) for lo, hi in scheme.segments()])
    np.testing.assert_array_equal(covered, np.arange(t))


def test_single_donor_is_copied(rng):
    src = rng.standard_normal((1, 3, 40))
    out = reconstruct(src, make_scheme(40, 7), 5, rng)
    assert all(np.array_equal(o, src[0]) for o in out)
    with pytest.raises(EmptyClass):
        reconstruct(np.empty((0, 3, 40)), make_scheme(40, 7), 2, rng)


def test_one_sample_segments(rng):
    src = rng.standard_normal((4, 2, 9))
    out = reconstruct(src, make_scheme(9, 9), 20, rng)
    for o in out:
        for t in range(9):
            assert any(np.array_equal(o[:, t], s[:, t]) for s in src)


def test_two_donor_outcome_frequencies():
    A = np.zeros((1, 4))
    B = np.ones((1, 4))
    src = np.stack([A, B])
    scheme = make_scheme(4, 2)
    outs = reconstruct(src, scheme, 10_000, np.random.default_rng(0))
    codes = outs[:, 0, 0] * 2 + outs[:, 0, 2]   # first half donor, second half donor
    freq = np.bincount(codes.astype(int), minlength=4) / len(codes)
    assert np.all(np.abs(freq - 0.25) <= 0.02)


@given(st.integers(0, 2**32 - 1), st.integers(1, 40), st.integers(2, 4),
       st.integers(1, 16), st.sampled_from(["equal_width", "random_cuts"]))
def test_provenance_contract(seed, n, k, s, mode):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, 2, 32))
    y = rng.integers(0, k, n)
    X_out, y_out, prov, scheme = augment_batch(X, y, s, rng, mode, return_provenance=True)
    assert len(X_out) == 2 * n
    np.testing.assert_array_equal(np.bincount(y_out, minlength=k), 2 * np.bincount(y, minlength=k))
    np.testing.assert_array_equal(X_out[:n], X)
    for j in range(n):
        syn = X_out[n + j]
        assert np.all(y[prov[j]] == y_out[n + j])
        for seg, (lo, hi) in enumerate(scheme.segments()):
            np.testing.assert_array_equal(syn[:, lo:hi], X[prov[j, seg], :, lo:hi])


def test_one_trial_per_class_duplicates(rng):
    X = rng.standard_normal((3, 2, 24))
    y = np.array([0, 1, 2])
    X_out, y_out = augment_batch(X, y, 12, rng)
    np.testing.assert_array_equal(X_out[3:], X)
    np.testing.assert_array_equal(y_out, [0, 1, 2, 0, 1, 2])


def test_batch_of_64(rng):
    X = rng.standard_normal((64, 4, 48))
    y = rng.integers(0, 2, 64)
    X_out, y_out = SRAugmenter()(X, y, rng)
    assert X_out.shape == (128, 4, 48)
    np.testing.assert_array_equal(np.bincount(y_out), 2 * np.bincount(y))


def test_multiplier(rng):
    X = rng.standard_normal((10, 2, 24))
    y = np.arange(10) % 2
    X_out, y_out = augment_batch(X, y, 4, rng, multiplier=3)
    assert len(X_out) == 40
    np.testing.assert_array_equal(np.bincount(y_out), [20, 20])


def test_determinism_and_no_mutation(rng):
    X = rng.standard_normal((16, 3, 36))
    y = np.arange(16) % 2
    X_copy = X.copy()
    a = augment_batch(X, y, 12, np.random.default_rng(7))
    b = augment_batch(X, y, 12, np.random.default_rng(7))
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(X, X_copy)
