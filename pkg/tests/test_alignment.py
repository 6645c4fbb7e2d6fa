import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.linalg import fractional_matrix_power

from easr.alignment import (AlignmentReference, aligned_mean_covariance, align_dataset,
                            apply_alignment, compute_reference, compute_target_reference,
                            mean_covariance)
from easr.errors import DegenerateCovariance, DimensionMismatch, EmptyRun

from conftest import random_set


def test_identity_trial_reference():
    x = np.eye(3)
    ref = compute_reference([x])
    np.testing.assert_allclose(ref.mean_cov, np.eye(3))
    np.testing.assert_allclose(ref.whitener, np.eye(3), atol=1e-15)


def test_two_trial_mean():
    a = np.sqrt(2.0) * np.eye(2)
    b = np.sqrt(6.0) * np.eye(2)
    ref = compute_reference([a, b])
    np.testing.assert_allclose(ref.mean_cov, 4 * np.eye(2), atol=1e-14)
    np.testing.assert_allclose(ref.whitener, 0.5 * np.eye(2), atol=1e-15)
    assert ref.n_trials_used == 2


def test_mean_covariance_against_batch_sum(rng):
    X = rng.standard_normal((20, 8, 128))
    batch = sum(x @ x.T for x in X) / 20
    assert np.max(np.abs(mean_covariance(X) - batch)) < 1e-10


def test_whitener_matches_independent_route(rng):
    X = rng.standard_normal((15, 6, 80))
    ref = compute_reference(X)
    oracle = fractional_matrix_power(np.einsum("nct,ndt->cd", X, X) / 15, -0.5).real
    np.testing.assert_allclose(ref.whitener, oracle, atol=1e-10)


def test_apply_alignment_examples(rng):
    x = rng.standard_normal((2, 10))
    eye = AlignmentReference(np.eye(2), np.eye(2))
    np.testing.assert_array_equal(apply_alignment(eye, x), x)
    diag = AlignmentReference(np.diag([4.0, 0.25]), np.diag([0.5, 2.0]))
    out = apply_alignment(diag, x)
    np.testing.assert_allclose(out, [0.5 * x[0], 2.0 * x[1]])
    with pytest.raises(DimensionMismatch):
        apply_alignment(diag, rng.standard_normal((3, 10)))


def test_errors():
    with pytest.raises(EmptyRun):
        compute_reference([])
    with pytest.raises(DegenerateCovariance, match="subject 4, run 1"):
        compute_reference([np.zeros((3, 5))], 4, 1)
    with pytest.raises(DimensionMismatch):
        compute_reference([np.ones((2, 4)), np.ones((3, 4))])


@given(st.integers(0, 2**32 - 1), st.sampled_from([4, 8, 16]), st.integers(2, 50))
def test_whitening_identity(seed, c, n):
    rng = np.random.default_rng(seed)
    t = c + 8
    X = rng.standard_normal((n, c, t)) * rng.uniform(0.1, 10, size=(1, c, 1))
    ref = compute_reference(X)
    aligned = apply_alignment(ref, X)
    assert np.max(np.abs(aligned_mean_covariance(aligned) - np.eye(c))) < 1e-8
    assert np.max(np.abs(ref.whitener @ ref.mean_cov @ ref.whitener - np.eye(c))) < 1e-8


@given(st.integers(0, 2**32 - 1))
def test_mixing_invariance(seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((12, 6, 40))
    A = rng.standard_normal((6, 6)) + 3 * np.eye(6)
    mixed = np.einsum("ij,njt->nit", A, X)
    aligned = apply_alignment(compute_reference(mixed), mixed)
    assert np.max(np.abs(aligned_mean_covariance(aligned) - np.eye(6))) < 1e-8


def test_align_dataset_per_group(rng):
    ts = random_set(rng, n_subjects=2, c=5, t=40)
    # give the subjects very different mixing
    A = [rng.standard_normal((5, 5)) + 2 * np.eye(5) for _ in range(2)]
    X = np.stack([A[s] @ x for s, x in zip(ts.subject, ts.X)])
    out, refs = align_dataset(ts.with_data(X))
    assert out.aligned and len(refs) == 4
    for s, r in out.groups():
        g = out.X[(out.subject == s) & (out.run == r)]
        assert np.max(np.abs(aligned_mean_covariance(g) - np.eye(5))) < 1e-8
    np.testing.assert_array_equal(out.y, ts.y)


def test_align_dataset_single_group_is_composition(rng):
    ts = random_set(rng, n_subjects=1, n_runs=1)
    out, (ref,) = align_dataset(ts)
    np.testing.assert_array_equal(out.X, apply_alignment(compute_reference(ts.X), ts.X))


def test_idempotence(rng):
    ts = random_set(rng)
    once, _ = align_dataset(ts)
    twice, refs = align_dataset(once)
    rel = np.max(np.abs(twice.X - once.X)) / np.max(np.abs(once.X))
    assert rel < 1e-6
    assert all(np.max(np.abs(r.mean_cov - np.eye(4))) < 1e-6 for r in refs)


def test_groups_do_not_interact(rng):
    ts = random_set(rng, n_subjects=3)
    full, _ = align_dataset(ts)
    keep = np.flatnonzero(ts.subject == 1)
    alone, _ = align_dataset(ts.take(keep))
    np.testing.assert_array_equal(full.X[keep], alone.X)


def test_presupplied_reference_is_used(rng):
    ts = random_set(rng, n_subjects=1, n_runs=1)
    ref = compute_reference(ts.X[:4], 0, 0)
    out, used = align_dataset(ts, {(0, 0): ref})
    assert used[0] is ref
    np.testing.assert_allclose(out.X, apply_alignment(ref, ts.X))


def test_target_reference(small_synth):
    ts, _ = small_synth
    run = ts.X[(ts.subject == 0) & (ts.run == 0)]
    full = compute_reference(run)
    target = compute_target_reference(run)
    assert target.target_calibrated and not full.target_calibrated
    np.testing.assert_array_equal(full.whitener, target.whitener)


def test_calibration_size_converges():
    from easr.synthgen import GeneratorConfig, generate
    ts, _ = generate(GeneratorConfig(n_subjects=1, n_sessions=1,
                                     trials_per_class_per_session=50, seed=5))
    full = compute_reference(ts.X).whitener
    errs = []
    for n in (4, 10, 40):
        draws = [np.linalg.norm(compute_reference(ts.X[np.random.default_rng(k).choice(
            100, n, replace=False)]).whitener - full) for k in range(20)]
        errs.append(np.mean(draws))
    assert errs[0] > errs[1] > errs[2]


def test_single_rank_deficient_calibration_trial():
    x = np.zeros((3, 10))
    x[0] = 1.0
    # the relative floor keeps the rank-1 reference invertible
    ref = compute_target_reference([x])
    assert np.isfinite(ref.whitener).all()
    with pytest.raises(DegenerateCovariance):
        compute_target_reference([np.zeros((3, 10))])
