"""Paired sign-flip permutation test and Stouffer p-value combination."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from statistics import NormalDist

import numpy as np

from .errors import DomainError, EmptyInput, PairingError

_STD_NORMAL = NormalDist()
P_CLAMP = 1e-15


@dataclass
class PairedSample:
    condition_a: np.ndarray
    condition_b: np.ndarray
    keys: list = field(default_factory=list)

    def __post_init__(self):
        self.condition_a = np.asarray(self.condition_a, dtype=np.float64)
        self.condition_b = np.asarray(self.condition_b, dtype=np.float64)
        if self.condition_a.shape != self.condition_b.shape or self.condition_a.ndim != 1:
            raise PairingError("paired conditions must be 1-D and of equal length")
        if self.keys and len(self.keys) != len(self.condition_a):
            raise PairingError("one pairing key per pair is required")

    @property
    def differences(self) -> np.ndarray:
        return self.condition_a - self.condition_b

    @classmethod
    def from_mappings(cls, a: dict, b: dict) -> "PairedSample":
        if set(a) != set(b):
            missing = sorted(set(a) ^ set(b), key=str)
            raise PairingError(f"unmatched units: {missing[:5]}")
        keys = sorted(a, key=str)
        return cls([a[k] for k in keys], [b[k] for k in keys], keys)


def _sign_patterns(n: int, start: int, stop: int) -> np.ndarray:
    codes = np.arange(start, stop, dtype=np.int64)[:, None]
    bits = (codes >> np.arange(n, dtype=np.int64)) & 1
    return 1.0 - 2.0 * bits


def paired_permutation_test(sample: PairedSample, n_permutations: int = 10_000,
                            rng: np.random.Generator | None = None,
                            exhaustive_threshold: int = 20) -> float:
    """One-tailed p-value for mean(a - b) > 0 under random sign flips.

    Exhaustive over all ``2**n`` flips when ``n <= exhaustive_threshold``;
    otherwise Monte Carlo with the identity flip counted, giving
    ``p >= 1 / (n_permutations + 1)``.
    """
    d = sample.differences
    n = len(d)
    if n < 2:
        raise PairingError("need at least two pairs")
    observed = d.sum()
    # ties within rounding count as ">="
    tol = 1e-12 * max(1.0, np.abs(d).sum())
    if n <= exhaustive_threshold:
        total = 1 << n
        hits = 0
        chunk = 1 << 16
        for start in range(0, total, chunk):
            sums = _sign_patterns(n, start, min(total, start + chunk)) @ d
            hits += int(np.count_nonzero(sums >= observed - tol))
        return hits / total
    rng = rng if rng is not None else np.random.default_rng()
    hits = 0
    chunk = 4096
    done = 0
    while done < n_permutations:
        m = min(chunk, n_permutations - done)
        signs = rng.choice(np.array([-1.0, 1.0]), size=(m, n))
        hits += int(np.count_nonzero(signs @ d >= observed - tol))
        done += m
    return (hits + 1) / (n_permutations + 1)


def normal_cdf(z: float) -> float:
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def normal_inverse_cdf(q: float) -> float:
    """Standard normal quantile (Wichura's AS241 rational approximation, via the stdlib)."""
    if not 0.0 < q < 1.0 or math.isnan(q):
        raise DomainError(f"quantile must lie strictly in (0, 1), got {q}")
    return _STD_NORMAL.inv_cdf(q)


def stouffer_combine(p_values) -> float:
    """Unweighted Stouffer: ``Z = sum(Phi^-1(1 - p_i)) / sqrt(k)``, returns ``1 - Phi(Z)``."""
    p = [float(v) for v in p_values]
    if not p:
        raise EmptyInput("no p-values to combine")
    clamped = [min(max(v, P_CLAMP), 1.0 - P_CLAMP) for v in p]
    if clamped != p:
        warnings.warn("p-values clamped into [1e-15, 1 - 1e-15]", RuntimeWarning, stacklevel=2)
    # Phi^-1(1 - p) == -Phi^-1(p) keeps precision for tiny p; fsum makes the sum order-free
    z = math.fsum(-normal_inverse_cdf(v) for v in clamped) / math.sqrt(len(clamped))
    return normal_cdf(-z)
