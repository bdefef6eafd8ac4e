"""Multi-label MLP classifier with sigmoid outputs and its training loop.

All parameters live in one flat float64 vector; per-layer weights and biases
are views into it, which keeps the Adam update a single array operation.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .datagen import TRAIN_SPLITS, DataError, Dataset
from .metrics import NoPositivesError, mean_average_precision
from .numerics import AdamState, DimensionError, adam_step, bce_terms, sigmoid


def _layer_slices(layer_dims):
    out, pos = [], 0
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        w = slice(pos, pos + fan_in * fan_out)
        pos += fan_in * fan_out
        b = slice(pos, pos + fan_out)
        pos += fan_out
        out.append((w, b, fan_in, fan_out))
    return out, pos


@dataclass
class MLPClassifier:
    layer_dims: tuple[int, ...]
    params: np.ndarray
    activation: str = "relu"

    def __post_init__(self):
        self.layer_dims = tuple(int(v) for v in self.layer_dims)
        if len(self.layer_dims) < 2 or min(self.layer_dims) < 1:
            raise ValueError("layer_dims needs an input and an output size, all positive")
        if self.activation != "relu":
            raise ValueError(f"unsupported activation {self.activation!r}")
        self.params = np.asarray(self.params, dtype=np.float64)
        self._slices, size = _layer_slices(self.layer_dims)
        if self.params.shape != (size,):
            raise DimensionError(f"expected {size} parameters, got {self.params.shape}")

    @classmethod
    def initialize(cls, layer_dims, seed: int) -> "MLPClassifier":
        """Weights uniform in +-1/sqrt(fan_in), biases zero."""
        slices, size = _layer_slices(tuple(layer_dims))
        rng = np.random.default_rng([seed, 0])
        params = np.zeros(size)
        for w, _, fan_in, _ in slices:
            bound = 1.0 / math.sqrt(fan_in)
            params[w] = rng.uniform(-bound, bound, size=w.stop - w.start)
        return cls(tuple(layer_dims), params)

    @property
    def n_in(self) -> int:
        return self.layer_dims[0]

    @property
    def n_out(self) -> int:
        return self.layer_dims[-1]

    def layers(self, params=None):
        """(W, b) views per layer; W has shape fan_in x fan_out."""
        p = self.params if params is None else params
        return [(p[w].reshape(fi, fo), p[b]) for w, b, fi, fo in self._slices]

    @property
    def weights(self):
        return [w for w, _ in self.layers()]

    @property
    def biases(self):
        return [b for _, b in self.layers()]

    def copy(self) -> "MLPClassifier":
        return MLPClassifier(self.layer_dims, self.params.copy(), self.activation)

    # -- serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "layer_dims": list(self.layer_dims),
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "activation": self.activation,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MLPClassifier":
        dims = tuple(doc["layer_dims"])
        slices, size = _layer_slices(dims)
        if len(doc["weights"]) != len(slices) or len(doc["biases"]) != len(slices):
            raise DimensionError("weights/biases do not match layer_dims")
        params = np.empty(size)
        for (w, b, fi, fo), wv, bv in zip(slices, doc["weights"], doc["biases"]):
            wv, bv = np.asarray(wv, dtype=np.float64), np.asarray(bv, dtype=np.float64)
            if wv.shape != (fi, fo) or bv.shape != (fo,):
                raise DimensionError("weight or bias shape inconsistent with layer_dims")
            params[w] = wv.ravel()
            params[b] = bv
        return cls(dims, params, doc.get("activation", "relu"))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "MLPClassifier":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def forward(model: MLPClassifier, x, params=None) -> np.ndarray:
    """Logits for one sample (length d) or a batch (n x d)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.n_in:
        raise DimensionError(f"input has {x.shape[-1]} features, model expects {model.n_in}")
    h = x
    layers = model.layers(params)
    for i, (w, b) in enumerate(layers):
        h = h @ w + b
        if i < len(layers) - 1:
            h = np.maximum(h, 0.0)
    return h


def soft_predict(model: MLPClassifier, x, T: float = 1.0) -> np.ndarray:
    """Temperature-scaled sigmoid outputs sigmoid(logits / T)."""
    if not T > 0:
        raise ValueError(f"temperature must be positive, got {T}")
    return sigmoid(forward(model, x) / T)


def _backprop(model, x, targets, params, with_loss):
    layers = model.layers(params)
    acts = [x]
    h = x
    for i, (w, b) in enumerate(layers):
        h = h @ w + b
        if i < len(layers) - 1:
            h = np.maximum(h, 0.0)
        acts.append(h)
    n = x.shape[0]
    loss = float(bce_terms(targets, h).sum() / n) if with_loss else None

    grad = np.empty_like(params)
    delta = (sigmoid(h) - targets) / n
    for i in range(len(layers) - 1, -1, -1):
        wsl, bsl, _, _ = model._slices[i]
        grad[wsl] = (acts[i].T @ delta).ravel()
        grad[bsl] = delta.sum(axis=0)
        if i > 0:
            # relu'(z) is 1 exactly where the stored activation is positive
            delta = (delta @ layers[i][0].T) * (acts[i] > 0)
    return loss, grad


def loss_and_grad(model: MLPClassifier, x, targets, params=None):
    """Mean over the batch of the summed per-label cross entropy, and its
    gradient with respect to the flat parameter vector."""
    x = np.asarray(x, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if x.ndim == 1:
        x, targets = x[None, :], targets[None, :]
    if targets.shape != (x.shape[0], model.n_out):
        raise DimensionError(f"targets must be {x.shape[0]} x {model.n_out}")
    p = model.params if params is None else np.asarray(params, dtype=np.float64)
    return _backprop(model, x, targets, p, with_loss=True)


def batch_loss(model: MLPClassifier, x, targets, params=None) -> float:
    logits = forward(model, x, params)
    return float(bce_terms(np.asarray(targets, dtype=np.float64), logits).sum() / logits.shape[0])


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 250
    initial_lr: float = 0.001
    lr_decay: float = 0.9
    decay_every: int = 5
    batch_size: int = 64
    seed: int = 0
    early_stop: bool = True
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if not 0 < self.lr_decay <= 1:
            raise ValueError("lr_decay must lie in (0, 1]")
        if self.batch_size < 1 or self.decay_every < 1:
            raise ValueError("batch_size and decay_every must be >= 1")
        if not self.initial_lr > 0:
            raise ValueError("initial_lr must be positive")

    def lr_at(self, epoch: int) -> float:
        """Learning rate used during ``epoch`` (1-based)."""
        return self.initial_lr * self.lr_decay ** ((epoch - 1) // self.decay_every)


@dataclass
class TrainHistory:
    """Entry 0 is the evaluation before any update; later training losses
    are the size-weighted mean of that epoch's mini-batch losses."""

    train_loss: list[float] = field(default_factory=list)
    dev_map: list[float] = field(default_factory=list)
    best_epoch: int = 0

    @property
    def best_dev_map(self) -> float:
        return self.dev_map[self.best_epoch]


def _targets_for(targets, rows):
    if isinstance(targets, np.ndarray):
        return targets[rows]
    return targets.targets(rows)


def _dev_map(model, dataset, dev_rows):
    if dev_rows.size == 0:
        return float("nan")
    try:
        return mean_average_precision(soft_predict(model, dataset.x[dev_rows]), dataset.y[dev_rows])
    except NoPositivesError:
        return float("nan")


def _fit(model, dataset, targets, cfg, splits, dev_split):
    rows = dataset.rows(splits)
    if rows.size == 0:
        raise DataError(f"no training records in splits {tuple(splits)}")
    if model.n_in != dataset.d:
        raise DimensionError(f"model expects {model.n_in} features, dataset has {dataset.d}")
    dev_rows = dataset.rows(dev_split) if dev_split else np.empty(0, dtype=np.int64)
    refresh = getattr(targets, "refresh", None)
    rng = np.random.default_rng([cfg.seed, 1])

    def check(t):
        if t.shape != (len(t), model.n_out):
            raise DimensionError(f"targets have {t.shape[-1]} labels, model outputs {model.n_out}")
        return t

    if refresh is not None:
        refresh(model)
    hist = TrainHistory()
    hist.train_loss.append(batch_loss(model, dataset.x[rows], check(_targets_for(targets, rows))))
    hist.dev_map.append(_dev_map(model, dataset, dev_rows))
    best = model.copy()
    best_score = hist.dev_map[0]

    state = AdamState.zeros_like(model.params)
    bs = cfg.batch_size
    for epoch in range(1, cfg.epochs + 1):
        if refresh is not None and epoch > 1:
            refresh(model)
        lr = cfg.lr_at(epoch)
        order = rows[rng.permutation(rows.size)]
        total = 0.0
        for start in range(0, order.size, bs):
            batch = order[start:start + bs]
            t = check(_targets_for(targets, batch))
            loss, grad = _backprop(model, dataset.x[batch], t, model.params, with_loss=True)
            total += loss * batch.size
            model.params, state = adam_step(model.params, grad, state, lr,
                                            cfg.beta1, cfg.beta2, cfg.eps)
        # running mean of the mini-batch losses seen during the epoch
        hist.train_loss.append(total / rows.size)
        score = _dev_map(model, dataset, dev_rows)
        hist.dev_map.append(score)
        if score > best_score or (np.isnan(best_score) and not np.isnan(score)):
            best_score = score
            best = model.copy()
            hist.best_epoch = epoch

    if not cfg.early_stop or dev_rows.size == 0:
        # nothing to select on without a dev split
        hist.best_epoch = cfg.epochs
        return model, hist
    return best, hist


def train(model: MLPClassifier, dataset: Dataset, targets, cfg: TrainConfig,
          splits=TRAIN_SPLITS, dev_split="dev"):
    """Train a freshly initialised network with ``model``'s architecture.

    ``targets`` is a target provider (``targets(rows)``, optional
    ``refresh(model)`` called before every epoch) or an n x L array aligned
    with the dataset rows. Returns the best-dev-mAP checkpoint (epoch 0
    included) and the history.
    """
    init = MLPClassifier.initialize(model.layer_dims, cfg.seed)
    return _fit(init, dataset, targets, cfg, splits, dev_split)


def finetune(init: MLPClassifier, dataset: Dataset, targets, cfg: TrainConfig,
             splits=TRAIN_SPLITS, dev_split="dev"):
    """Like :func:`train`, starting from ``init``'s weights (left untouched)."""
    return _fit(init.copy(), dataset, targets, cfg, splits, dev_split)


def evaluate_map(model: MLPClassifier, dataset: Dataset, split_name: str, T: float = 1.0) -> float:
    rows = dataset.rows(split_name)
    return mean_average_precision(soft_predict(model, dataset.x[rows], T), dataset.y[rows])
