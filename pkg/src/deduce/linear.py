"""Softmax linear classifier with minibatch SGD (classical momentum, L2 decay,
stepped learning-rate schedule), written directly against numpy. Heads are
trained on cached feature vectors only; no backbone is ever touched."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, asdict

import numpy as np

from .core import (ClassSet, DeduceError, COCO_INDEX, softmax, softmax_rows)

LOG_CLAMP = 1e-12
N_OBJECTS = len(COCO_INDEX)


class TrainingError(DeduceError):
    pass


@dataclass
class LinearHead:
    weights: np.ndarray  # (K, D_in)
    bias: np.ndarray     # (K,)
    class_set: ClassSet

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.bias.ndim != 1:
            raise DeduceError("head needs a (K, D) weight matrix and a (K,) bias")
        if self.weights.shape[0] != len(self.class_set) or self.bias.shape[0] != len(self.class_set):
            raise DeduceError(
                f"head has {self.weights.shape[0]} rows for {len(self.class_set)} classes")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise DeduceError("head parameters must be finite")

    @property
    def input_dim(self) -> int:
        return self.weights.shape[1]

    def logits(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.input_dim,):
            raise DeduceError(f"input has shape {x.shape}, head expects ({self.input_dim},)")
        return self.weights @ x + self.bias

    def logits_batch(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.input_dim:
            raise DeduceError(f"batch has shape {X.shape}, head expects (N, {self.input_dim})")
        return X @ self.weights.T + self.bias


def forward(head: LinearHead, x) -> np.ndarray:
    """Posterior over the head's class set: softmax(W x + b)."""
    return softmax(head.logits(x))


def forward_batch(head: LinearHead, X) -> np.ndarray:
    return softmax_rows(head.logits_batch(X))


@dataclass
class TrainConfig:
    epochs: int
    lr0: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 1e-4
    lr_drop_every: int = 30
    lr_drop_factor: float = 10.0
    batch_size: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.lr0 < 0:
            raise DeduceError("lr0 must be >= 0")
        if not 0.0 <= self.momentum < 1.0:
            raise DeduceError("momentum must lie in [0,1)")
        if self.weight_decay < 0:
            raise DeduceError("weight_decay must be >= 0")
        if self.epochs < 1 or self.lr_drop_every < 1 or self.batch_size < 1:
            raise DeduceError("epochs, lr_drop_every and batch_size must be >= 1")

    def lr_at(self, epoch) -> float:
        """Learning rate for a 0-based epoch index: lr0 / factor^(epoch // drop_every)."""
        return self.lr0 / self.lr_drop_factor ** (epoch // self.lr_drop_every)

    def hash(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


def scene_schedule(**overrides) -> TrainConfig:
    """90 epochs, rate divided by 10 every 30 (the long schedule)."""
    kw = dict(epochs=90, lr_drop_every=30)
    kw.update(overrides)
    return TrainConfig(**kw)


def combined_schedule(**overrides) -> TrainConfig:
    """9 epochs, rate divided by 10 every 3 (the short schedule for the
    concatenated-feature head, which converges much faster)."""
    kw = dict(epochs=9, lr_drop_every=3)
    kw.update(overrides)
    return TrainConfig(**kw)


@dataclass
class EpochStats:
    epoch: int  # 1-based
    lr: float
    train_loss: float
    train_acc: float
    val_acc: float


@dataclass
class TrainReport:
    epochs: list = field(default_factory=list)

    @property
    def final_val_acc(self) -> float:
        return self.epochs[-1].val_acc

    def epochs_to_reach(self, acc, on="val_acc"):
        """First (1-based) epoch whose recorded accuracy meets `acc`; None if
        never reached."""
        for stats in self.epochs:
            if getattr(stats, on) >= acc:
                return stats.epoch
        return None


def label_ids(labels) -> np.ndarray:
    """Accept SceneLabel sequences or raw integer ids interchangeably."""
    labels = list(labels)
    if labels and hasattr(labels[0], "id"):
        labels = [lb.id for lb in labels]
    return np.asarray(labels, dtype=np.int64)


def cross_entropy(predicted, truth) -> float:
    """Mean negative log-likelihood of the true classes.

    predicted: (N, K) rows of posteriors, clamped at 1e-12 before the log.
    truth: (N,) integer class ids (or SceneLabels).
    """
    predicted = np.asarray(predicted, dtype=np.float64)
    truth = label_ids(np.atleast_1d(truth)) if not isinstance(truth, (int, np.integer)) \
        else np.asarray([truth], dtype=np.int64)
    if predicted.ndim == 1:
        predicted = predicted[None, :]
        truth = truth.reshape(1)
    if predicted.shape[0] == 0:
        raise DeduceError("cross_entropy needs a non-empty batch")
    picked = predicted[np.arange(predicted.shape[0]), truth]
    return float(-np.mean(np.log(np.maximum(picked, LOG_CLAMP))))


def analytic_gradient(head: LinearHead, X, y):
    """Gradient of the mean cross-entropy over the batch w.r.t. weights and
    bias: the softmax residual (p - y) averaged against the inputs."""
    X = np.asarray(X, dtype=np.float64)
    y = label_ids(y)
    if X.ndim != 2 or X.shape[1] != head.input_dim:
        raise DeduceError(f"batch shape {X.shape} does not match head dim {head.input_dim}")
    n = X.shape[0]
    P = forward_batch(head, X)
    P[np.arange(n), y] -= 1.0
    P /= n
    grad_w = P.T @ X
    grad_b = P.sum(axis=0)
    return grad_w, grad_b


def init_head(class_set: ClassSet, input_dim, rng) -> LinearHead:
    """Seeded uniform weights in +-1/sqrt(D_in), zero bias."""
    scale = 1.0 / np.sqrt(input_dim)
    weights = rng.uniform(-scale, scale, size=(len(class_set), input_dim))
    bias = np.zeros(len(class_set))
    return LinearHead(weights, bias, class_set)


def _momentum_step(param, velocity, grad, lr, momentum):
    # v <- mu v - lr g ; w <- w + v   (classical heavy-ball, in place)
    velocity *= momentum
    velocity -= lr * grad
    param += velocity


def _accuracy(head, X, y):
    if X.shape[0] == 0:
        return 0.0
    pred = np.argmax(head.logits_batch(X), axis=1)
    return float(np.mean(pred == y))


def train(features, labels, class_set: ClassSet, cfg: TrainConfig,
          val_features=None, val_labels=None):
    """Minibatch SGD on the softmax cross-entropy.

    Per batch: g = g_data + weight_decay * w, then v <- mu v - lr g,
    w <- w + v. Shuffling, initialization and therefore the whole run are
    deterministic given cfg.seed. Reported train_loss is the running mean of
    pre-update batch losses; accuracies are measured at epoch end. val_acc
    falls back to the training set when no validation split is supplied.
    """
    X = np.asarray(features, dtype=np.float64)
    y = label_ids(labels)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise DeduceError("features must be (N, D) with one label per row")
    counts = np.bincount(y, minlength=len(class_set))
    if np.any(counts == 0):
        empty = [class_set[i].name for i in np.where(counts == 0)[0]]
        raise TrainingError(f"no training samples for class(es): {empty}")
    has_val = val_features is not None
    if has_val:
        Xv = np.asarray(val_features, dtype=np.float64)
        yv = label_ids(val_labels)

    rng = np.random.default_rng(cfg.seed)
    head = init_head(class_set, X.shape[1], rng)
    vel_w = np.zeros_like(head.weights)
    vel_b = np.zeros_like(head.bias)
    n = X.shape[0]
    report = TrainReport()
    for epoch in range(cfg.epochs):
        lr = cfg.lr_at(epoch)
        order = rng.permutation(n)
        loss_sum = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            Xb, yb = X[idx], y[idx]
            nb = idx.shape[0]
            P = forward_batch(head, Xb)
            batch_loss = cross_entropy(P, yb)
            if not np.isfinite(batch_loss):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch + 1}, batch {start // cfg.batch_size}")
            loss_sum += batch_loss * nb
            P[np.arange(nb), yb] -= 1.0
            P /= nb
            grad_w = P.T @ Xb + cfg.weight_decay * head.weights
            grad_b = P.sum(axis=0) + cfg.weight_decay * head.bias
            _momentum_step(head.weights, vel_w, grad_w, lr, cfg.momentum)
            _momentum_step(head.bias, vel_b, grad_b, lr, cfg.momentum)
        train_acc = _accuracy(head, X, y)
        val_acc = _accuracy(head, Xv, yv) if has_val else train_acc
        report.epochs.append(EpochStats(epoch + 1, lr, loss_sum / n, train_acc, val_acc))
    return head, report


def concat_features(scene_feature, detections, min_conf=0.5) -> np.ndarray:
    """Scene feature followed by an 80-wide one-hot block: index k is 1 when
    any detection of object k meets min_conf."""
    scene_feature = np.asarray(scene_feature, dtype=np.float64)
    onehot = np.zeros(N_OBJECTS)
    for det in detections:
        if det.confidence >= min_conf:
            onehot[det.object.id] = 1.0
    return np.concatenate([scene_feature, onehot])


def save_head(head: LinearHead, path, seed=None, config_hash=None, extra=None):
    """Single-object JSON checkpoint: class set, dims and provenance up front,
    then row-major weights and bias at full precision."""
    payload = {
        "type": "head",
        "class_set": list(head.class_set.names),
        "input_dim": head.input_dim,
        "seed": seed,
        "config_hash": config_hash,
    }
    if extra:
        payload.update(extra)
    payload["weights"] = [[float(v) for v in row] for row in head.weights]
    payload["bias"] = [float(v) for v in head.bias]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def load_head(path) -> LinearHead:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("type") != "head":
        raise DeduceError(f"{path} is not a head checkpoint")
    class_set = ClassSet(payload["class_set"])
    head = LinearHead(np.asarray(payload["weights"]), np.asarray(payload["bias"]), class_set)
    if head.input_dim != payload["input_dim"]:
        raise DeduceError(f"{path}: checkpoint dim mismatch")
    return head
