"""Euclidean Alignment.

Each (subject, run) group gets a reference ``R = mean_i x_i x_i^T`` and every
trial of the group is mapped to ``R^{-1/2} x``; afterwards the mean Gram matrix
of the group is the identity.

The Gram matrix is used without a ``1/T`` factor, so aligned trials have
per-sample power of roughly ``1/T`` rather than 1. Whitening still holds
exactly in the Gram sense.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import TrialSet, inv_sqrtm, trial_covariance
from .errors import DegenerateCovariance, DimensionMismatch, EmptyRun, InvalidSignal


@dataclass
class AlignmentReference:
    mean_cov: np.ndarray
    whitener: np.ndarray
    subject_id: int = -1
    run_id: int = -1
    n_trials_used: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def target_calibrated(self) -> bool:
        return bool(self.meta.get("target_calibrated", False))


def mean_covariance(trials) -> np.ndarray:
    trials = list(trials) if not isinstance(trials, np.ndarray) else trials
    if len(trials) == 0:
        raise EmptyRun("cannot build a reference from zero trials")
    c = np.asarray(trials[0]).shape[0]
    acc = np.zeros((c, c))
    for x in trials:
        x = np.asarray(x)
        if x.ndim != 2 or x.shape[0] != c:
            raise DimensionMismatch("all trials of a run must share the channel count")
        acc += trial_covariance(x)
    return acc / len(trials)


def compute_reference(trials, subject_id: int = -1, run_id: int = -1) -> AlignmentReference:
    mean_cov = mean_covariance(trials)
    try:
        whitener = inv_sqrtm(mean_cov)
    except DegenerateCovariance as exc:
        raise DegenerateCovariance(
            f"subject {subject_id}, run {run_id}: {exc}") from exc
    return AlignmentReference(mean_cov, whitener, int(subject_id), int(run_id), len(trials))


def compute_target_reference(calibration_trials, subject_id: int = -1,
                             run_id: int = -1) -> AlignmentReference:
    """Reference built only from a target subject's calibration trials."""
    ref = compute_reference(calibration_trials, subject_id, run_id)
    ref.meta["target_calibrated"] = True
    return ref


def apply_alignment(ref: AlignmentReference, trial: np.ndarray) -> np.ndarray:
    """Whiten one ``(C, T)`` trial, or a stack ``(N, C, T)``."""
    x = np.asarray(trial, dtype=np.float64)
    c = ref.whitener.shape[0]
    if x.ndim not in (2, 3) or x.shape[-2] != c:
        raise DimensionMismatch(f"trial has shape {x.shape}, reference is {c}x{c}")
    if x.ndim == 2:
        return ref.whitener @ x
    return np.einsum("ij,njt->nit", ref.whitener, x)


def align_dataset(ts: TrialSet, references: dict | None = None
                  ) -> tuple[TrialSet, list[AlignmentReference]]:
    """Align every (subject, run) group with its own reference.

    ``references`` may pre-supply references keyed by ``(subject, run)``
    (for target subjects calibrated on a subset); missing groups are
    computed from all of their trials.
    """
    references = dict(references or {})
    out = np.empty_like(ts.X)
    used = []
    for subj, run in ts.groups():
        idx = np.flatnonzero((ts.subject == subj) & (ts.run == run))
        ref = references.get((subj, run))
        if ref is None:
            ref = compute_reference(ts.X[idx], subj, run)
        out[idx] = apply_alignment(ref, ts.X[idx])
        used.append(ref)
    if not np.all(np.isfinite(out)):
        raise InvalidSignal("alignment produced non-finite samples")
    return ts.with_data(out, aligned=True), used


def aligned_mean_covariance(X: np.ndarray) -> np.ndarray:
    return np.einsum("nct,ndt->cd", X, X) / len(X)
