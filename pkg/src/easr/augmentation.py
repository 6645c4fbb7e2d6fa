"""Segment & Reconstruct (S&R) augmentation.

Trials of one class are cut into ``s`` consecutive time segments; a synthetic
trial takes its k-th segment verbatim from the k-th segment of a randomly
chosen same-class donor. Segments never move in time and classes never mix.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptyClass, InvalidSegmentation

BOUNDARY_MODES = ("equal_width", "random_cuts")


@dataclass(frozen=True)
class SegmentationScheme:
    segment_count: int
    boundary_mode: str
    boundaries: tuple[int, ...]

    @property
    def n_times(self) -> int:
        return self.boundaries[-1]

    def segments(self):
        b = self.boundaries
        return [(b[k], b[k + 1]) for k in range(self.segment_count)]


def make_scheme(n_times: int, segment_count: int = 12, mode: str = "equal_width",
                rng: np.random.Generator | None = None) -> SegmentationScheme:
    if segment_count < 1 or segment_count > n_times:
        raise InvalidSegmentation(f"need 1 <= s <= T, got s={segment_count}, T={n_times}")
    if mode == "equal_width":
        bounds = [k * n_times // segment_count for k in range(segment_count + 1)]
    elif mode == "random_cuts":
        if rng is None:
            raise InvalidSegmentation("random_cuts needs an rng")
        cuts = rng.choice(np.arange(1, n_times), size=segment_count - 1, replace=False)
        bounds = [0, *sorted(int(c) for c in cuts), n_times]
    else:
        raise InvalidSegmentation(f"unknown boundary mode {mode!r}")
    return SegmentationScheme(segment_count, mode, tuple(bounds))


def reconstruct(class_trials: np.ndarray, scheme: SegmentationScheme, n_synthetic: int,
                rng: np.random.Generator, return_donors: bool = False):
    """Build ``n_synthetic`` trials from same-class ``class_trials`` of shape (n, C, T).

    Donors are drawn uniformly with replacement, independently per segment.
    With ``return_donors`` also returns the (n_synthetic, s) donor index table.
    """
    src = np.asarray(class_trials)
    if src.ndim != 3 or len(src) == 0:
        raise EmptyClass("reconstruct needs at least one source trial")
    if src.shape[-1] != scheme.n_times:
        raise DimensionMismatch(f"trials have T={src.shape[-1]}, scheme expects {scheme.n_times}")
    donors = rng.integers(0, len(src), size=(n_synthetic, scheme.segment_count))
    out = np.empty((n_synthetic, *src.shape[1:]), dtype=src.dtype)
    for k, (lo, hi) in enumerate(scheme.segments()):
        out[:, :, lo:hi] = src[donors[:, k], :, lo:hi]
    if return_donors:
        return out, donors
    return out


def augment_batch(X: np.ndarray, y: np.ndarray, segment_count: int,
                  rng: np.random.Generator, mode: str = "equal_width",
                  multiplier: int = 1, return_provenance: bool = False):
    """Originals followed by ``multiplier`` synthetic trials per original.

    Synthetic slot ``j`` (for ``j < len(X)``) shares the label of original ``j``,
    so the class histogram is scaled exactly by ``1 + multiplier``. Provenance,
    when requested, is an (n_synthetic, s) table of donor row indices into ``X``.
    """
    X = np.asarray(X)
    y = np.asarray(y)
    if len(X) == 0:
        raise EmptyClass("cannot augment an empty batch")
    scheme = make_scheme(X.shape[-1], segment_count, mode, rng)
    slot_labels = np.tile(y, multiplier)
    syn = np.empty((len(slot_labels), *X.shape[1:]), dtype=X.dtype)
    prov = np.empty((len(slot_labels), scheme.segment_count), dtype=np.int64)
    for c in np.unique(y):
        members = np.flatnonzero(y == c)
        slots = np.flatnonzero(slot_labels == c)
        trials, donors = reconstruct(X[members], scheme, len(slots), rng, return_donors=True)
        syn[slots] = trials
        prov[slots] = members[donors]
    X_out = np.concatenate([X, syn])
    y_out = np.concatenate([y, slot_labels])
    if return_provenance:
        return X_out, y_out, prov, scheme
    return X_out, y_out


@dataclass
class SRAugmenter:
    """Online batch hook used by the training loop."""

    segment_count: int = 12
    mode: str = "equal_width"
    multiplier: int = 1

    def __call__(self, X, y, rng):
        return augment_batch(X, y, self.segment_count, rng, self.mode, self.multiplier)
