"""Signal conditioning: V -> uV rescale, zero-phase band-pass, exponential moving standardization."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal

from .core import TrialSet
from .errors import AlreadyProcessed, InvalidBand

CHAIN = ("rescale", "bandpass", "standardize")
# odd (point-symmetric) reflection, as in scipy's filtfilt default
PAD_TYPE = "odd"


@dataclass
class PreprocessConfig:
    band_low_hz: float = 4.0
    band_high_hz: float = 38.0
    filter_order: int = 4
    ems_factor_new: float = 1e-3
    ems_eps: float = 1e-4
    rescale_to_microvolts: bool = True

    def __post_init__(self):
        if self.filter_order <= 0 or self.filter_order % 2:
            raise InvalidBand("filter_order must be a positive even integer")
        if not 0 < self.ems_factor_new < 1:
            raise ValueError("ems_factor_new must lie in (0, 1)")
        if self.ems_eps <= 0:
            raise ValueError("ems_eps must be positive")

    def pad_length(self) -> int:
        return 3 * self.filter_order


def _require_step(ts: TrialSet, step: str):
    # steps must run in CHAIN order, each at most once
    done = ts.preprocessing
    if step in done:
        raise AlreadyProcessed(f"'{step}' was already applied to this set")
    later = CHAIN[CHAIN.index(step) + 1:]
    if any(s in done for s in later):
        raise AlreadyProcessed(f"'{step}' must run before {', '.join(later)}")


def rescale_v_to_uv(ts: TrialSet) -> TrialSet:
    _require_step(ts, "rescale")
    return ts.with_data(ts.X * 1e6, preprocessing=ts.preprocessing + ("rescale",))


def butter_bandpass_sos(low_hz: float, high_hz: float, fs: float, order: int) -> np.ndarray:
    nyq = fs / 2.0
    if not 0 < low_hz < high_hz < nyq:
        raise InvalidBand(f"need 0 < {low_hz} < {high_hz} < Nyquist ({nyq}) Hz")
    return signal.butter(order, [low_hz, high_hz], btype="bandpass", fs=fs, output="sos")


def bandpass_array(X: np.ndarray, fs: float, cfg: PreprocessConfig) -> np.ndarray:
    """Zero-phase Butterworth band-pass along the last axis."""
    sos = butter_bandpass_sos(cfg.band_low_hz, cfg.band_high_hz, fs, cfg.filter_order)
    padlen = min(cfg.pad_length(), X.shape[-1] - 1)
    return signal.sosfiltfilt(sos, X, axis=-1, padtype=PAD_TYPE, padlen=padlen)


def bandpass(ts: TrialSet, cfg: PreprocessConfig) -> TrialSet:
    _require_step(ts, "bandpass")
    out = bandpass_array(ts.X, ts.sampling_rate, cfg)
    return ts.with_data(out, preprocessing=ts.preprocessing + ("bandpass",))


def ems_array(X: np.ndarray, factor_new: float, eps: float) -> np.ndarray:
    """Exponential moving standardization along the last axis.

    ``m_t = f x_t + (1-f) m_{t-1}`` with ``m_0 = x_0``,
    ``v_t = f (x_t - m_t)^2 + (1-f) v_{t-1}`` with ``v_0 = 0``,
    output ``(x_t - m_t) / max(sqrt(v_t), eps)``. Causal: sample t only sees x_0..x_t.
    """
    X = np.asarray(X, dtype=np.float64)
    f = factor_new
    b, a = [f], [1.0, -(1.0 - f)]
    # state chosen so that the virtual m_{-1} equals x_0
    zi = ((1.0 - f) * X[..., :1])
    mean = signal.lfilter(b, a, X, axis=-1, zi=zi)[0]
    centered = X - mean
    var = signal.lfilter(b, a, centered ** 2, axis=-1)
    return centered / np.maximum(np.sqrt(var), eps)


def exponential_moving_standardize(ts: TrialSet, cfg: PreprocessConfig) -> TrialSet:
    """Per-trial, per-channel standardization (each trial is its own recording)."""
    _require_step(ts, "standardize")
    out = ems_array(ts.X, cfg.ems_factor_new, cfg.ems_eps)
    return ts.with_data(out, preprocessing=ts.preprocessing + ("standardize",))


def preprocess(ts: TrialSet, cfg: PreprocessConfig | None = None) -> TrialSet:
    cfg = cfg or PreprocessConfig()
    if ts.preprocessing:
        raise AlreadyProcessed(f"set already carries steps {ts.preprocessing}")
    if cfg.rescale_to_microvolts:
        ts = rescale_v_to_uv(ts)
    ts = bandpass(ts, cfg)
    return exponential_moving_standardize(ts, cfg)
