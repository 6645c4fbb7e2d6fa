"""Trial containers and symmetric-matrix primitives.

Trials are plain ``(C, T)`` float arrays; a :class:`TrialSet` stacks them into
an ``(N, C, T)`` array with per-trial label, subject and run vectors.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (DegenerateCovariance, DimensionMismatch, InvalidLabel, InvalidSignal,
                     NotSymmetric)

SYMMETRY_RTOL = 1e-10


@dataclass
class TrialSet:
    X: np.ndarray
    y: np.ndarray
    subject: np.ndarray
    run: np.ndarray
    class_count: int
    sampling_rate: float
    preprocessing: tuple[str, ...] = ()
    aligned: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        if self.X.ndim != 3:
            raise InvalidSignal(f"expected (N, C, T) array, got shape {self.X.shape}")
        n, c, t = self.X.shape
        if c < 2 or t < 2:
            raise InvalidSignal(f"trials need C >= 2 and T >= 2, got C={c}, T={t}")
        self.y = np.asarray(self.y, dtype=np.int64)
        self.subject = np.asarray(self.subject, dtype=np.int64)
        self.run = np.asarray(self.run, dtype=np.int64)
        for name in ("y", "subject", "run"):
            if getattr(self, name).shape != (n,):
                raise DimensionMismatch(f"{name} must have shape ({n},)")
        if n and (self.y.min() < 0 or self.y.max() >= self.class_count):
            raise InvalidLabel(f"labels must lie in [0, {self.class_count})")
        if self.sampling_rate <= 0:
            raise InvalidSignal("sampling_rate must be positive")

    def __len__(self):
        return self.X.shape[0]

    @property
    def n_channels(self) -> int:
        return self.X.shape[1]

    @property
    def n_times(self) -> int:
        return self.X.shape[2]

    def subjects(self) -> list[int]:
        return sorted(int(s) for s in np.unique(self.subject))

    def runs(self, subject: int | None = None) -> list[int]:
        r = self.run if subject is None else self.run[self.subject == subject]
        return sorted(int(v) for v in np.unique(r))

    def groups(self) -> list[tuple[int, int]]:
        """Sorted distinct (subject, run) pairs."""
        pairs = {(int(s), int(r)) for s, r in zip(self.subject, self.run)}
        return sorted(pairs)

    def take(self, idx) -> "TrialSet":
        idx = np.asarray(idx)
        if idx.dtype != bool:
            idx = idx.astype(np.intp)
        return replace(
            self,
            X=self.X[idx],
            y=self.y[idx],
            subject=self.subject[idx],
            run=self.run[idx],
            meta=dict(self.meta),
        )

    def with_data(self, X: np.ndarray, **changes) -> "TrialSet":
        return replace(self, X=X, meta=dict(self.meta), **changes)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.y, minlength=self.class_count)


def concat(sets: list[TrialSet]) -> TrialSet:
    if not sets:
        raise InvalidSignal("nothing to concatenate")
    first = sets[0]
    return replace(
        first,
        X=np.concatenate([s.X for s in sets]),
        y=np.concatenate([s.y for s in sets]),
        subject=np.concatenate([s.subject for s in sets]),
        run=np.concatenate([s.run for s in sets]),
        meta=dict(first.meta),
    )


def _check_square_symmetric(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {m.shape}")
    scale = max(np.abs(m).max(), np.finfo(float).tiny)
    if np.abs(m - m.T).max() > SYMMETRY_RTOL * scale:
        raise NotSymmetric("matrix is not symmetric")
    return m


def trial_covariance(trial: np.ndarray) -> np.ndarray:
    """Unnormalized Gram matrix ``x @ x.T`` of a single ``(C, T)`` trial."""
    x = np.asarray(trial, dtype=np.float64)
    if x.ndim != 2:
        raise InvalidSignal(f"expected a (C, T) trial, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InvalidSignal("trial contains NaN or Inf")
    g = x @ x.T
    # exact symmetry, independent of BLAS summation order
    return 0.5 * (g + g.T)


def eig_symmetric(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues in descending order and the matching orthonormal eigenvectors (columns)."""
    m = _check_square_symmetric(m)
    w, v = np.linalg.eigh(0.5 * (m + m.T))
    return w[::-1].copy(), v[:, ::-1].copy()


def inv_sqrtm(m: np.ndarray, eigenvalue_floor: float | None = None) -> np.ndarray:
    """Symmetric inverse square root ``V diag(max(w, floor))^-1/2 V^T``.

    The default floor is relative, ``1e-10 * w_max``, so the regularization is
    scale-invariant. Raises :class:`DegenerateCovariance` if every eigenvalue
    sits below the floor.
    """
    w, v = eig_symmetric(m)
    if eigenvalue_floor is None:
        eigenvalue_floor = 1e-10 * w[0] if w[0] > 0 else 0.0
    if w[0] <= 0 or np.all(w < eigenvalue_floor):
        raise DegenerateCovariance("all eigenvalues fall below the regularization floor")
    w = np.maximum(w, eigenvalue_floor)
    out = (v / np.sqrt(w)) @ v.T
    return 0.5 * (out + out.T)
