"""Synthetic multi-subject motor-imagery-like EEG.

Generative model for a trial of subject ``s``, session ``r``, class ``k``::

    x = R_r A_s (rhythms + pink background) + white / snr

* ``A_s`` is a symmetric positive-definite channel mixing with condition
  number at most ``mixing_condition_bound``; it carries all between-subject
  variability, which is exactly what a linear whitening can undo.
* ``R_r`` is a small per-session rotation (session nonstationarity).
* Every trial contains one bursty rhythm per configured frequency. The rhythm
  at the class's own frequency comes from a fixed class pattern; the others
  come from a random direction drawn per trial. Frequency content alone is
  therefore uninformative and the label lives in the spatial pattern.

All randomness comes from Philox (counter-based, 4x64 with 10 rounds, numpy's
implementation) keyed by ``SeedSequence(seed, spawn_key=...)`` streams, so the
output depends on the config alone. Samples are rounded to float32 so the
in-memory set equals its on-disk container bit for bit.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import expm

from .core import TrialSet
from .io import write_container

SHARED_STREAM = 1_000_003


@dataclass
class GeneratorConfig:
    n_subjects: int = 8
    n_sessions: int = 2
    trials_per_class_per_session: int = 50
    n_channels: int = 8
    n_times: int = 256
    sampling_rate_hz: float = 128.0
    class_count: int = 2
    source_frequencies_hz: tuple[float, ...] = (10.0, 22.0)
    snr: float = 1.5
    mixing_condition_bound: float = 10.0
    seed: int = 0
    # second-order knobs of the generative model
    background_amplitude: float = 1.0
    rhythm_amplitude: float = 1.0
    burst_width_s: float = 0.35
    bursts_per_trial: int = 2
    session_rotation_rad: float = 0.1
    pattern_overlap: float = 0.0

    def __post_init__(self):
        self.source_frequencies_hz = tuple(float(f) for f in self.source_frequencies_hz)
        for name in ("n_subjects", "n_sessions", "trials_per_class_per_session",
                     "n_channels", "n_times", "class_count"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.class_count >= self.n_channels:
            raise ValueError("class_count must be smaller than n_channels")
        if not 0.0 <= self.pattern_overlap < 1.0:
            raise ValueError("pattern_overlap must lie in [0, 1)")
        if self.class_count > len(self.source_frequencies_hz):
            raise ValueError("class_count exceeds the number of source frequencies")
        if self.mixing_condition_bound < 1:
            raise ValueError("mixing_condition_bound must be >= 1")
        if max(self.source_frequencies_hz) >= self.sampling_rate_hz / 2:
            raise ValueError("source frequencies must lie below Nyquist")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["source_frequencies_hz"] = list(self.source_frequencies_hz)
        return d


@dataclass
class GroundTruth:
    mixing: np.ndarray             # (S, C, C), A_s
    session_rotations: np.ndarray  # (S, R, C, C), R_r per subject
    class_patterns: np.ndarray     # (K, C), unit-norm
    frequencies_hz: np.ndarray     # (K,)
    trial_seeds: np.ndarray        # (N,), one per trial in set order
    config: dict = field(default_factory=dict)

    def condition_numbers(self) -> np.ndarray:
        return np.array([np.linalg.cond(a) for a in self.mixing])


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=key)))


def _random_unit(rng, c):
    v = rng.standard_normal(c)
    return v / np.linalg.norm(v)


def _random_orthogonal(rng, c):
    q, r = np.linalg.qr(rng.standard_normal((c, c)))
    return q * np.sign(np.diag(r))


def _class_patterns(rng, c, k, overlap):
    """Unit patterns with pairwise cosine ``overlap`` (shared component + private ones)."""
    q = _random_orthogonal(rng, c)
    private, common = q[:, :k].T, q[:, k]
    return np.sqrt(1.0 - overlap) * private + np.sqrt(overlap) * common


def _mixing_matrix(rng, c, bound):
    u = _random_orthogonal(rng, c)
    # log-spectrum stretched to span exactly [1, bound]
    z = rng.uniform(0.0, 1.0, size=c)
    z = (z - z.min()) / (z.max() - z.min())
    d = np.exp(z * np.log(bound))
    d /= np.exp(np.mean(np.log(d)))
    gain = np.exp(rng.uniform(np.log(0.5), np.log(2.0)))
    a = gain * (u * d) @ u.T
    return 0.5 * (a + a.T)


def _session_rotation(rng, c, angle):
    k = rng.standard_normal((c, c))
    k = k - k.T
    k /= np.linalg.norm(k, 2)
    return expm(angle * k)


def _pink_noise(rng, shape):
    n = shape[-1]
    spec = np.fft.rfft(rng.standard_normal(shape), axis=-1)
    f = np.arange(spec.shape[-1], dtype=np.float64)
    f[0] = 1.0
    out = np.fft.irfft(spec / np.sqrt(f), n=n, axis=-1)
    return out / out.std(axis=-1, keepdims=True)


def _burst_envelope(rng, t, width, n_bursts):
    env = np.zeros_like(t)
    for _ in range(n_bursts):
        center = rng.uniform(t[0], t[-1])
        env += np.exp(-0.5 * ((t - center) / width) ** 2)
    return env / max(env.max(), 1e-12)


def _trial_latent(rng, cfg: GeneratorConfig, label, patterns, t):
    c = cfg.n_channels
    latent = cfg.background_amplitude * _pink_noise(rng, (c, t.size))
    for j, freq in enumerate(cfg.source_frequencies_hz[:cfg.class_count]):
        pattern = patterns[j] if j == label else _random_unit(rng, c)
        phase = rng.uniform(0, 2 * np.pi)
        env = _burst_envelope(rng, t, cfg.burst_width_s, cfg.bursts_per_trial)
        wave = env * np.sin(2 * np.pi * freq * t + phase)
        latent += cfg.rhythm_amplitude * np.sqrt(2.0) * np.outer(pattern, wave)
    return latent


def generate(cfg: GeneratorConfig) -> tuple[TrialSet, GroundTruth]:
    c, n_t, k = cfg.n_channels, cfg.n_times, cfg.class_count
    t = np.arange(n_t) / cfg.sampling_rate_hz
    shared = _stream(cfg.seed, SHARED_STREAM)
    patterns = _class_patterns(shared, c, k, cfg.pattern_overlap)

    mixing, rotations = [], []
    X, y, subj, run, seeds = [], [], [], [], []
    for s in range(cfg.n_subjects):
        srng = _stream(cfg.seed, s)
        a = _mixing_matrix(srng, c, cfg.mixing_condition_bound)
        assert np.linalg.cond(a) <= cfg.mixing_condition_bound * (1 + 1e-9)
        rots = np.stack([_session_rotation(srng, c, cfg.session_rotation_rad * r)
                         for r in range(cfg.n_sessions)])
        mixing.append(a)
        rotations.append(rots)
        for r in range(cfg.n_sessions):
            brng = _stream(cfg.seed, s, r)
            labels = np.repeat(np.arange(k), cfg.trials_per_class_per_session)
            labels = labels[brng.permutation(labels.size)]
            block_seeds = brng.integers(0, 2**63 - 1, size=labels.size, dtype=np.int64)
            m = rots[r] @ a
            for label, ts in zip(labels, block_seeds):
                trng = np.random.Generator(np.random.Philox(int(ts)))
                latent = _trial_latent(trng, cfg, label, patterns, t)
                noise = trng.standard_normal((c, n_t)) / cfg.snr
                X.append(m @ latent + noise)
                y.append(label)
                subj.append(s)
                run.append(r)
                seeds.append(ts)
    X = np.stack(X).astype(np.float32).astype(np.float64)
    ts = TrialSet(X, y, subj, run, class_count=k, sampling_rate=cfg.sampling_rate_hz,
                  meta={"generator": cfg.to_dict()})
    truth = GroundTruth(np.stack(mixing), np.stack(rotations), patterns,
                        np.asarray(cfg.source_frequencies_hz[:k]), np.asarray(seeds),
                        cfg.to_dict())
    return ts, truth


TRUTH_FILE = "ground_truth.npz"


def export(ts: TrialSet, truth: GroundTruth, path) -> dict:
    """Write the container plus a ground-truth sidecar; returns the manifest."""
    path = Path(path)
    try:
        manifest = write_container(ts, path)
        np.savez(path / TRUTH_FILE, mixing=truth.mixing,
                 session_rotations=truth.session_rotations,
                 class_patterns=truth.class_patterns, frequencies_hz=truth.frequencies_hz,
                 trial_seeds=truth.trial_seeds, config=np.array(json.dumps(truth.config)))
    except OSError as exc:
        raise OSError(f"cannot export synthetic dataset to {path}: {exc}") from exc
    return manifest


def load_truth(path) -> GroundTruth:
    with np.load(Path(path) / TRUTH_FILE) as z:
        return GroundTruth(z["mixing"], z["session_rotations"], z["class_patterns"],
                           z["frequencies_hz"], z["trial_seeds"], json.loads(str(z["config"])))
