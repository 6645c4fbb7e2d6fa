"""From-scratch EEG decoders, balanced cross-entropy, AdamW and the training loop.

Parameters are dicts of float64 arrays. A model object only holds the
architecture; ``forward`` returns logits and ``loss_and_grad`` runs the
reverse pass by hand.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import fft as sp_fft

from .core import TrialSet
from .errors import DimensionMismatch, EmptySplit, InvalidLabel, NonFiniteGradient

LOG_EPS = 1e-6


@dataclass
class TrainConfig:
    max_epochs: int = 200
    patience: int = 75
    learning_rate: float = 6.25e-4
    weight_decay: float = 0.1
    batch_size: int = 64
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    fine_tune_epochs: int = 100
    fine_tune_patience: int = 30
    seed: int = 0

    def __post_init__(self):
        if not (0 < self.adam_beta1 < 1 and 0 < self.adam_beta2 < 1):
            raise ValueError("Adam betas must lie in (0, 1)")
        if self.patience > self.max_epochs:
            raise ValueError("patience cannot exceed max_epochs")
        if 0 < self.fine_tune_epochs < self.fine_tune_patience:
            raise ValueError("fine_tune_patience cannot exceed fine_tune_epochs")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    valid_loss: list = field(default_factory=list)
    valid_accuracy: list = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=key)))


def _uniform(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class ShallowNet:
    """Temporal conv -> spatial projection -> square -> mean pool -> log -> dense.

    Temporal filters are shared across channels (valid convolution along
    time); the spatial projection mixes every (temporal filter, channel) pair.
    """

    name = "shallow"

    def __init__(self, n_channels: int, n_times: int, n_classes: int, n_temporal: int = 8,
                 kernel_length: int = 25, n_spatial: int = 8, pool_length: int | None = None,
                 pool_stride: int | None = None):
        self.n_channels, self.n_times, self.n_classes = n_channels, n_times, n_classes
        self.n_temporal, self.n_spatial = n_temporal, n_spatial
        self.kernel_length = min(kernel_length, max(1, n_times // 2))
        self.conv_length = n_times - self.kernel_length + 1
        self.pool_length = min(pool_length or max(1, n_times // 4), self.conv_length)
        self.pool_stride = pool_stride or max(1, n_times // 8)
        self.n_pool = (self.conv_length - self.pool_length) // self.pool_stride + 1
        pool = np.zeros((self.conv_length, self.n_pool))
        for w in range(self.n_pool):
            lo = w * self.pool_stride
            pool[lo:lo + self.pool_length, w] = 1.0 / self.pool_length
        self._pool = pool
        self._fft_length = sp_fft.next_fast_len(n_times + self.kernel_length - 1, real=True)

    def config(self) -> dict:
        return {"name": self.name, "n_channels": self.n_channels, "n_times": self.n_times,
                "n_classes": self.n_classes, "n_temporal": self.n_temporal,
                "kernel_length": self.kernel_length, "n_spatial": self.n_spatial,
                "pool_length": self.pool_length, "pool_stride": self.pool_stride}

    @property
    def n_features(self) -> int:
        return self.n_spatial * self.n_pool

    def init_params(self, seed: int) -> dict:
        c, ft, fs, k = self.n_channels, self.n_temporal, self.n_spatial, self.kernel_length
        return {
            "temporal": _uniform(_rng(seed, 0, 0), (ft, k), k),
            "spatial": _uniform(_rng(seed, 0, 1), (fs, ft, c), ft * c),
            "dense_w": _uniform(_rng(seed, 0, 2), (self.n_classes, self.n_features), self.n_features),
            "dense_b": np.zeros(self.n_classes),
        }

    def _check(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 3 or X.shape[1:] != (self.n_channels, self.n_times):
            raise DimensionMismatch(
                f"model expects (*, {self.n_channels}, {self.n_times}), got {X.shape}")
        return X

    def forward(self, params: dict, X: np.ndarray, return_cache: bool = False):
        X = self._check(X)
        n, t1 = self._fft_length, self.conv_length
        # temporal conv and spatial projection fold into one (F_s, C, k) kernel;
        # zero padding to n >= T + k - 1 keeps the FFT correlation free of wrap-around
        kernel = np.einsum("gfc,fj->gcj", params["spatial"], params["temporal"])
        # frequency-major (F, B, C) so the channel contraction is a batched matmul
        Xf = sp_fft.rfft(X, n, axis=-1).transpose(2, 0, 1)
        Kf = sp_fft.rfft(kernel, n, axis=-1).transpose(2, 1, 0)
        zf = (Xf @ np.conj(Kf)).transpose(1, 2, 0)
        z = sp_fft.irfft(zf, n, axis=-1)[..., :t1]
        power = (z * z) @ self._pool
        feats = np.log(power + LOG_EPS).reshape(len(X), -1)
        logits = feats @ params["dense_w"].T + params["dense_b"]
        if return_cache:
            return logits, (Xf, z, power, feats)
        return logits

    def backward(self, params: dict, cache, dlogits: np.ndarray) -> dict:
        Xf, z, power, feats = cache
        n, k = self._fft_length, self.kernel_length
        grads = {"dense_w": dlogits.T @ feats, "dense_b": dlogits.sum(axis=0)}
        dpower = (dlogits @ params["dense_w"]).reshape(power.shape) / (power + LOG_EPS)
        dz = 2.0 * z * (dpower @ self._pool.T)
        dzf = sp_fft.rfft(dz, n, axis=-1).transpose(2, 0, 1)
        dkf = (Xf.transpose(0, 2, 1) @ np.conj(dzf)).transpose(2, 1, 0)
        dkernel = sp_fft.irfft(dkf, n, axis=-1)[..., :k]
        grads["spatial"] = np.einsum("gcj,fj->gfc", dkernel, params["temporal"])
        grads["temporal"] = np.einsum("gcj,gfc->fj", dkernel, params["spatial"])
        return grads


class LinearBaseline:
    """Multinomial logistic regression on per-channel log-power."""

    name = "linear"

    def __init__(self, n_channels: int, n_times: int, n_classes: int):
        self.n_channels, self.n_times, self.n_classes = n_channels, n_times, n_classes

    def config(self) -> dict:
        return {"name": self.name, "n_channels": self.n_channels, "n_times": self.n_times,
                "n_classes": self.n_classes}

    def init_params(self, seed: int) -> dict:
        return {"dense_w": _uniform(_rng(seed, 0, 2), (self.n_classes, self.n_channels),
                                   self.n_channels),
                "dense_b": np.zeros(self.n_classes)}

    def forward(self, params, X, return_cache=False):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 3 or X.shape[1:] != (self.n_channels, self.n_times):
            raise DimensionMismatch(
                f"model expects (*, {self.n_channels}, {self.n_times}), got {X.shape}")
        power = np.mean(X * X, axis=2)
        feats = np.log(power + LOG_EPS)
        logits = feats @ params["dense_w"].T + params["dense_b"]
        if return_cache:
            return logits, feats
        return logits

    def backward(self, params, cache, dlogits):
        return {"dense_w": dlogits.T @ cache, "dense_b": dlogits.sum(axis=0)}


MODELS = {"shallow": ShallowNet, "linear": LinearBaseline}


def build_model(name: str, n_channels: int, n_times: int, n_classes: int, **kwargs):
    try:
        cls = MODELS[name]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; choose from {sorted(MODELS)}") from None
    return cls(n_channels, n_times, n_classes, **kwargs)


def model_from_config(cfg: dict):
    cfg = dict(cfg)
    return build_model(cfg.pop("name"), **cfg)


def class_weights(labels: np.ndarray, n_classes: int) -> np.ndarray:
    """``w_c ~ 1/freq(c)`` scaled so that ``sum_c w_c freq(c) = 1``; absent classes get 0."""
    counts = np.bincount(np.asarray(labels), minlength=n_classes).astype(np.float64)
    if counts.sum() == 0:
        raise EmptySplit("cannot derive class weights from an empty split")
    freq = counts / counts.sum()
    present = freq > 0
    w = np.zeros(n_classes)
    w[present] = 1.0 / (present.sum() * freq[present])
    return w


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def balanced_cross_entropy(logits, labels, weights, return_grad: bool = False):
    """Class-weighted mean of ``-log softmax(logits)[y]``, normalized by the summed weights."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    k = logits.shape[1]
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise InvalidLabel(f"labels must lie in [0, {k})")
    logp = log_softmax(logits)
    w = np.asarray(weights, dtype=np.float64)[labels]
    total = w.sum()
    rows = np.arange(len(labels))
    loss = -(w * logp[rows, labels]).sum() / total
    if not return_grad:
        return loss
    dlogits = np.exp(logp)
    dlogits[rows, labels] -= 1.0
    dlogits *= (w / total)[:, None]
    return loss, dlogits


def loss_and_grad(model, params, X, y, weights):
    logits, cache = model.forward(params, X, return_cache=True)
    loss, dlogits = balanced_cross_entropy(logits, y, weights, return_grad=True)
    return loss, model.backward(params, cache, dlogits)


def gradient(model, params, X, y, weights) -> dict:
    return loss_and_grad(model, params, X, y, weights)[1]


def adam_init(params: dict) -> dict:
    return {"m": {k: np.zeros_like(v) for k, v in params.items()},
            "v": {k: np.zeros_like(v) for k, v in params.items()}}


def adam_step(state: dict, params: dict, grads: dict, cfg: TrainConfig, t: int):
    """One AdamW step: ``p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + wd * p)``."""
    if t < 1:
        raise ValueError("Adam step index starts at 1")
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(f"non-finite gradient in '{name}' at step {t}")
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    bc1, bc2 = 1.0 - b1 ** t, 1.0 - b2 ** t
    new_params, m_new, v_new = {}, {}, {}
    for name, p in params.items():
        g = grads[name]
        m = b1 * state["m"][name] + (1.0 - b1) * g
        v = b2 * state["v"][name] + (1.0 - b2) * g * g
        update = (m / bc1) / (np.sqrt(v / bc2) + cfg.adam_eps) + cfg.weight_decay * p
        new_params[name] = p - cfg.learning_rate * update
        m_new[name], v_new[name] = m, v
    return new_params, {"m": m_new, "v": v_new}


def _batched_logits(model, params, X, chunk=256):
    return np.concatenate([model.forward(params, X[i:i + chunk]) for i in range(0, len(X), chunk)])


def _fit(model, params, train_set: TrialSet, valid_set: TrialSet | None, cfg: TrainConfig,
         epochs: int, patience: int, augmenter, stream: int):
    if len(train_set) == 0:
        raise EmptySplit("training split is empty")
    if valid_set is not None and len(valid_set) == 0:
        valid_set = None
    weights = class_weights(train_set.y, train_set.class_count)
    shuffle_rng = _rng(cfg.seed, stream, 1)
    aug_rng = _rng(cfg.seed, stream, 2)
    state = adam_init(params)
    history = TrainHistory()
    best_params, best_loss, step = params, np.inf, 0
    X, y = train_set.X, train_set.y
    for epoch in range(1, epochs + 1):
        order = shuffle_rng.permutation(len(X))
        losses = []
        for lo in range(0, len(order), cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            xb, yb = X[idx], y[idx]
            if augmenter is not None:
                xb, yb = augmenter(xb, yb, aug_rng)
            loss, grads = loss_and_grad(model, params, xb, yb, weights)
            step += 1
            params, state = adam_step(state, params, grads, cfg, step)
            losses.append(loss)
        history.train_loss.append(float(np.mean(losses)))
        if valid_set is None:
            history.best_epoch = epoch
            best_params = params
            continue
        logits = _batched_logits(model, params, valid_set.X)
        vloss = float(balanced_cross_entropy(logits, valid_set.y, weights))
        history.valid_loss.append(vloss)
        history.valid_accuracy.append(float(np.mean(logits.argmax(1) == valid_set.y)))
        if vloss < best_loss:
            best_loss, best_params, history.best_epoch = vloss, params, epoch
        elif epoch - history.best_epoch >= patience:
            history.stopped_early = True
            break
    return best_params, history


def train(model, train_set: TrialSet, valid_set: TrialSet | None, cfg: TrainConfig,
          augmenter=None, params: dict | None = None):
    """Mini-batch AdamW with validation-loss early stopping.

    Returns the parameters of the best validation epoch (the last epoch when
    no validation split is given).
    """
    if params is None:
        params = model.init_params(cfg.seed)
    return _fit(model, params, train_set, valid_set, cfg, cfg.max_epochs, cfg.patience,
                augmenter, stream=1)


def fine_tune(model, params: dict, train_set: TrialSet, valid_set: TrialSet | None,
              cfg: TrainConfig, augmenter=None):
    """Continue training every layer for ``fine_tune_epochs`` with fresh optimizer state."""
    if cfg.fine_tune_epochs <= 0:
        return params, TrainHistory()
    return _fit(model, params, train_set, valid_set, cfg, cfg.fine_tune_epochs,
                cfg.fine_tune_patience, augmenter, stream=2)


def predict(model, params, X) -> np.ndarray:
    return _batched_logits(model, params, np.asarray(X)).argmax(axis=1)


def confusion_matrix(y_true, y_pred, n_classes: int) -> np.ndarray:
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(y_true), np.asarray(y_pred)), 1)
    return cm


def evaluate(model, params, test_set: TrialSet) -> tuple[float, np.ndarray]:
    if len(test_set) == 0:
        raise EmptySplit("test split is empty")
    pred = predict(model, params, test_set.X)
    cm = confusion_matrix(test_set.y, pred, test_set.class_count)
    return float(np.trace(cm) / cm.sum()), cm
