"""Small numpy MLP with hand-written backprop and Adam.

The network is ``[Linear -> ReLU -> Dropout] * k -> Linear``. With
``additive_split=d`` the first ``d`` inputs are attribute features and the
rest a positional encoding; the encoding is mapped to width ``d`` by a
learned matrix and added to the features before the first layer.
"""
from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.metrics import f1_score
from sklearn.utils.multiclass import unique_labels
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .exceptions import DivergenceError, FormatError, InvalidArgumentError

SMALL_HIDDEN = (128, 32, 16)
LARGE_HIDDEN = (128, 512, 256)


@dataclass
class TrainConfig:
    epochs: int = 100
    lr: float = 1e-3
    dropout: float = 0.15
    batch_size: int | None = None
    seed: int = 0
    max_epochs: int | None = None
    patience: int = 20
    weight_decay: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.dropout < 1.0:
            raise InvalidArgumentError("dropout must be in [0, 1)")
        if self.epochs < 1:
            raise InvalidArgumentError("epochs must be >= 1")


@dataclass
class MlpModel:
    dims: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    seed: int
    w_pe: np.ndarray | None = None
    split: int | None = None
    rng: np.random.Generator = field(default=None, repr=False)

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def params(self) -> list[np.ndarray]:
        out = [a for pair in zip(self.weights, self.biases) for a in pair]
        if self.w_pe is not None:
            out.append(self.w_pe)
        return out

    def copy_params(self) -> list[np.ndarray]:
        return [p.copy() for p in self.params()]

    def load_params(self, values: list[np.ndarray]) -> None:
        for dst, src in zip(self.params(), values):
            dst[...] = src

    def checksum(self) -> float:
        return float(sum(np.sum(p * (k + 1)) for k, p in enumerate(self.params())))


def init(dims, seed: int = 0, split: int | None = None) -> MlpModel:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases.

    ``dims`` lists the input width, hidden widths and output width. With
    ``split`` the input is ``[h (split), pe (rest)]`` and the first layer
    sees ``h + W_pe pe`` of width ``split``.
    """
    dims = [int(d) for d in dims]
    if len(dims) < 2 or min(dims) < 1:
        raise InvalidArgumentError(f"invalid layer dims {dims}")
    rng = np.random.default_rng(seed)
    w_pe = None
    first = dims[0]
    if split is not None:
        d_pe = dims[0] - split
        if split < 1 or d_pe < 1:
            raise InvalidArgumentError("additive split must leave both parts non-empty")
        bound = 1.0 / np.sqrt(d_pe)
        w_pe = rng.uniform(-bound, bound, size=(d_pe, split))
        first = split
    layer_dims = [first] + dims[1:]
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    return MlpModel(dims, weights, biases, seed, w_pe, split, rng)


def _forward(model: MlpModel, X: np.ndarray, train_mode: bool, dropout: float):
    cache = []
    if model.split is not None:
        a = X[:, :model.split] + X[:, model.split:] @ model.w_pe
    else:
        a = X
    last = model.n_layers - 1
    for k, (W, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ W + b
        if k == last:
            cache.append((a, None, None))
            return z, cache
        h = np.maximum(z, 0.0)
        mask = None
        if train_mode and dropout > 0.0:
            mask = (model.rng.random(h.shape) >= dropout) / (1.0 - dropout)
            h = h * mask
        cache.append((a, z, mask))
        a = h


def forward(model: MlpModel, inputs, train_mode: bool = False, dropout: float = 0.15) -> np.ndarray:
    """Logits for one sample (1-D) or a batch (2-D)."""
    X = np.asarray(inputs, dtype=np.float64)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != model.dims[0]:
        raise InvalidArgumentError(f"expected input width {model.dims[0]}, got {X.shape[1]}")
    logits, _ = _forward(model, X, train_mode, dropout)
    return logits[0] if single else logits


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def loss_and_grads(model: MlpModel, X, y, train_mode=False, dropout=0.15):
    """Mean cross-entropy and gradients aligned with ``model.params()``."""
    logits, cache = _forward(model, X, train_mode, dropout)
    probs = _softmax(logits)
    n = X.shape[0]
    loss = -np.mean(np.log(np.clip(probs[np.arange(n), y], 1e-300, None)))
    delta = probs
    delta[np.arange(n), y] -= 1.0
    delta /= n
    gW = [None] * model.n_layers
    gb = [None] * model.n_layers
    for k in range(model.n_layers - 1, -1, -1):
        a, _, _ = cache[k]
        gW[k] = a.T @ delta
        gb[k] = delta.sum(axis=0)
        if k == 0:
            break
        da = delta @ model.weights[k].T
        _, z_prev, mask_prev = cache[k - 1]
        if mask_prev is not None:
            da = da * mask_prev
        delta = da * (z_prev > 0)
    grads = [g for pair in zip(gW, gb) for g in pair]
    if model.split is not None:
        d0 = delta @ model.weights[0].T
        grads.append(X[:, model.split:].T @ d0)
    return loss, grads


class _Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def train(model: MlpModel, inputs, labels, config: TrainConfig, dev=None):
    """Adam on mean cross-entropy.

    Trains at least ``config.epochs`` epochs. If ``dev=(X, y)`` is given and
    ``max_epochs`` exceeds ``epochs``, training continues until dev accuracy
    has not improved for ``patience`` epochs; the dev-best parameters are
    restored either way. Returns ``(model, loss_trace)``.
    """
    X = np.asarray(inputs, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    L = model.dims[-1]
    if y.size and (y.min() < 0 or y.max() >= L):
        raise InvalidArgumentError(f"labels must lie in [0, {L})")
    n = X.shape[0]
    batch = config.batch_size or (n if n <= 4096 else 512)
    shuffle_rng = np.random.default_rng(config.seed)
    model.rng = np.random.default_rng(config.seed + 1)
    params = model.params()
    opt = _Adam(params, config.lr)
    max_epochs = max(config.max_epochs or config.epochs, config.epochs)
    trace = []
    best_acc, best_params, stale = -1.0, None, 0
    for epoch in range(max_epochs):
        order = shuffle_rng.permutation(n) if batch < n else np.arange(n)
        total = 0.0
        for lo in range(0, n, batch):
            idx = order[lo:lo + batch]
            loss, grads = loss_and_grads(model, X[idx], y[idx], True, config.dropout)
            if not np.isfinite(loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch}", epoch)
            if config.weight_decay:
                for k, p in enumerate(params):
                    grads[k] = grads[k] + config.weight_decay * p
            opt.step(params, grads)
            total += loss * idx.size
        trace.append(total / n)
        if dev is not None:
            acc = float(np.mean(predict(model, dev[0]) == dev[1]))
            if acc > best_acc:
                best_acc, best_params, stale = acc, model.copy_params(), 0
            else:
                stale += 1
            if epoch + 1 >= config.epochs and stale >= config.patience:
                break
    if best_params is not None:
        model.load_params(best_params)
    return model, trace


def predict(model: MlpModel, inputs) -> np.ndarray:
    return np.argmax(forward(model, np.atleast_2d(inputs)), axis=1)


def evaluate(model: MlpModel, inputs, labels) -> tuple[float, float]:
    """Accuracy and macro-F1 of argmax predictions."""
    y = np.asarray(labels)
    if y.size == 0:
        return float("nan"), float("nan")
    pred = predict(model, inputs)
    acc = float(np.mean(pred == y))
    f1 = float(f1_score(y, pred, average="macro", labels=np.arange(model.dims[-1]),
                        zero_division=0))
    return acc, f1


def grad_check(model: MlpModel, inputs, label, n_params: int = 50, step: float = 1e-4,
               seed: int = 0) -> float:
    """Max relative error between backprop and central differences over a
    random sample of scalar parameters (dropout off)."""
    X = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    y = np.atleast_1d(np.asarray(label, dtype=np.int64))
    _, grads = loss_and_grads(model, X, y)
    params = model.params()
    sizes = np.array([p.size for p in params])
    rng = np.random.default_rng(seed)
    picks = rng.choice(sizes.sum(), size=min(n_params, sizes.sum()), replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    worst = 0.0
    for flat in np.sort(picks):
        k = int(np.searchsorted(offsets, flat, side="right") - 1)
        view = params[k].reshape(-1)
        j = flat - offsets[k]
        orig = view[j]
        view[j] = orig + step
        up = loss_and_grads(model, X, y)[0]
        view[j] = orig - step
        down = loss_and_grads(model, X, y)[0]
        view[j] = orig
        num = (up - down) / (2 * step)
        ana = grads[k].reshape(-1)[j]
        denom = max(abs(num), abs(ana), 1e-7)
        worst = max(worst, abs(num - ana) / denom)
    return worst


_MAGIC = b"MLP1"


def save_model(model: MlpModel, path) -> None:
    """Versioned checkpoint: magic, dims, seed, split, then float64 tensors."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(model.dims)))
        fh.write(struct.pack(f"<{len(model.dims)}I", *model.dims))
        fh.write(struct.pack("<qq", model.seed, -1 if model.split is None else model.split))
        for p in model.params():
            fh.write(np.ascontiguousarray(p, dtype="<f8").tobytes())


def load_model(path) -> MlpModel:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != _MAGIC:
        raise FormatError(f"{path}: not an MLP1 checkpoint")
    (k,) = struct.unpack_from("<I", raw, 4)
    dims = list(struct.unpack_from(f"<{k}I", raw, 8))
    seed, split = struct.unpack_from("<qq", raw, 8 + 4 * k)
    model = init(dims, seed, None if split < 0 else split)
    off = 8 + 4 * k + 16
    for p in model.params():
        nbytes = p.size * 8
        if off + nbytes > len(raw):
            raise FormatError(f"{path}: truncated checkpoint")
        p[...] = np.frombuffer(raw, dtype="<f8", count=p.size, offset=off).reshape(p.shape)
        off += nbytes
    return model


def loss_trace_csv(trace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch", "loss"])
    for k, v in enumerate(trace):
        w.writerow([k, repr(float(v))])
    return buf.getvalue()


class MLPClassifier(ClassifierMixin, BaseEstimator):
    """scikit-learn wrapper around the numpy MLP.

    ``fit`` accepts ``eval_set=(X_dev, y_dev)`` for dev-based checkpoint
    selection. Labels may be arbitrary; they are encoded internally.
    """

    def __init__(self, hidden=SMALL_HIDDEN, epochs=100, max_epochs=None, patience=20,
                 lr=1e-3, dropout=0.15, batch_size=None, weight_decay=0.0,
                 additive_split=None, seed=0):
        self.hidden = hidden
        self.epochs = epochs
        self.max_epochs = max_epochs
        self.patience = patience
        self.lr = lr
        self.dropout = dropout
        self.batch_size = batch_size
        self.weight_decay = weight_decay
        self.additive_split = additive_split
        self.seed = seed

    def fit(self, X, y, eval_set=None):
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_ = unique_labels(y)
        if eval_set is not None:
            self.classes_ = unique_labels(y, eval_set[1])
        enc = {c: k for k, c in enumerate(self.classes_)}
        yi = np.array([enc[c] for c in y])
        dev = None
        if eval_set is not None:
            Xd = check_array(eval_set[0], dtype=np.float64)
            dev = (Xd, np.array([enc[c] for c in eval_set[1]]))
        self.n_features_in_ = X.shape[1]
        dims = [X.shape[1], *self.hidden, len(self.classes_)]
        self.model_ = init(dims, self.seed, self.additive_split)
        cfg = TrainConfig(epochs=self.epochs, lr=self.lr, dropout=self.dropout,
                          batch_size=self.batch_size, seed=self.seed,
                          max_epochs=self.max_epochs, patience=self.patience,
                          weight_decay=self.weight_decay)
        self.model_, self.loss_curve_ = train(self.model_, X, yi, cfg, dev)
        return self

    def decision_function(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        return forward(self.model_, X)

    def predict_proba(self, X):
        return _softmax(self.decision_function(X))

    def predict(self, X):
        return self.classes_[np.argmax(self.decision_function(X), axis=1)]
