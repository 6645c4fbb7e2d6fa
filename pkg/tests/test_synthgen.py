import numpy as np
import pytest

from easr.io import read_container
from easr.synthgen import GeneratorConfig, export, generate, load_truth


def test_shapes_and_balance(small_synth):
    ts, truth = small_synth
    assert ts.X.shape == (5 * 2 * 2 * 8, 8, 128)
    for s, r in ts.groups():
        block = ts.y[(ts.subject == s) & (ts.run == r)]
        np.testing.assert_array_equal(np.bincount(block), [8, 8])
    assert truth.mixing.shape == (5, 8, 8)
    assert len(truth.trial_seeds) == len(ts)


def test_condition_bound(small_synth):
    _, truth = small_synth
    cond = truth.condition_numbers()
    assert np.all(cond <= 10 * (1 + 1e-9))
    # the log-spectrum is stretched, so the bound is met exactly
    np.testing.assert_allclose(cond, 10.0, rtol=1e-6)


def test_determinism():
    cfg = GeneratorConfig(n_subjects=2, trials_per_class_per_session=3, n_times=64, seed=11)
    a, _ = generate(cfg)
    b, _ = generate(cfg)
    assert a.X.tobytes() == b.X.tobytes()
    c, _ = generate(GeneratorConfig(n_subjects=2, trials_per_class_per_session=3, n_times=64,
                                    seed=12))
    assert not np.array_equal(a.X, c.X)


def test_subjects_are_generated_independently():
    small, _ = generate(GeneratorConfig(n_subjects=2, trials_per_class_per_session=3, n_times=64))
    large, _ = generate(GeneratorConfig(n_subjects=4, trials_per_class_per_session=3, n_times=64))
    np.testing.assert_array_equal(small.X, large.X[:len(small)])


def test_session_rotation_is_orthogonal(small_synth):
    _, truth = small_synth
    for r in truth.session_rotations.reshape(-1, 8, 8):
        np.testing.assert_allclose(r @ r.T, np.eye(8), atol=1e-12)
    np.testing.assert_allclose(truth.session_rotations[:, 0], np.broadcast_to(np.eye(8), (5, 8, 8)),
                               atol=1e-15)


def test_config_validation():
    with pytest.raises(ValueError):
        GeneratorConfig(class_count=3)
    with pytest.raises(ValueError):
        GeneratorConfig(n_subjects=0)
    with pytest.raises(ValueError):
        GeneratorConfig(source_frequencies_hz=(10.0, 70.0))


def test_export_round_trip(tmp_path, small_synth):
    ts, truth = small_synth
    manifest = export(ts, truth, tmp_path / "synth")
    back = read_container(tmp_path / "synth")
    np.testing.assert_array_equal(back.X, ts.X)
    np.testing.assert_array_equal(back.y, ts.y)
    assert manifest["n_trials"] == len(ts)
    assert manifest["n_subjects"] == len(ts.subjects())
    again = load_truth(tmp_path / "synth")
    assert np.all(again.condition_numbers() <= truth.config["mixing_condition_bound"] * (1 + 1e-9))
    np.testing.assert_array_equal(again.mixing, truth.mixing)
