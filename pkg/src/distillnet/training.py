"""Cross-entropy loss, SGD with momentum, and the training loop."""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from .errors import ShapeError, ValidationError


@dataclass
class TrainConfig:
    """Hyperparameters for one training run.

    lr_decay multiplies the learning rate once per epoch, so epoch e
    (1-based) trains at learning_rate * lr_decay**(e-1).
    """

    learning_rate: float = 0.01
    momentum: float = 0.9
    batch_size: int = 64
    epochs: int = 20
    seed: int = 0
    shuffle: bool = True
    lr_decay: float = 0.98

    def __post_init__(self):
        if not np.isfinite(self.learning_rate) or self.learning_rate < 0:
            raise ValidationError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if not 0 <= self.momentum < 1:
            raise ValidationError(f"momentum must be in [0, 1), got {self.momentum}")
        if int(self.batch_size) < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")
        if int(self.epochs) < 1:
            raise ValidationError(f"epochs must be >= 1, got {self.epochs}")
        if not 0 < self.lr_decay <= 1:
            raise ValidationError(f"lr_decay must be in (0, 1], got {self.lr_decay}")


@dataclass
class EpochLog:
    """Per-epoch record; epoch is 1-based."""

    epoch: int
    train_loss: float
    test_loss: float
    test_accuracy: float
    wall_time_s: float


def cross_entropy(pred, target):
    """Mean over rows of sum_k -target_k * ln(pred_k).

    Both arrays are (N, K); target rows must sum to 1 within 1e-6. Entries of
    target that are exactly 0 contribute nothing even if the matching pred
    entry underflowed to 0.
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.ndim != 2 or pred.shape != target.shape:
        raise ShapeError(f"pred {pred.shape} and target {target.shape} must be equal 2-d shapes")
    sums = target.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > 1e-6):
        bad = int(np.argmax(np.abs(sums - 1.0)))
        raise ValidationError(f"target row {bad} sums to {sums[bad]!r}, expected 1")
    active = target > 0
    logp = np.log(np.where(active, pred, 1.0))
    return float(-(target * logp).sum() / pred.shape[0])


def sgd_step(params, grads, velocity, cfg):
    """In-place SGD-with-momentum update: v <- m*v + g; p <- p - lr*v."""
    if not (len(params) == len(grads) == len(velocity)):
        raise ShapeError("params, grads and velocity must have equal lengths")
    for p, g, v in zip(params, grads, velocity):
        if p.shape != g.shape or p.shape != v.shape:
            raise ShapeError(f"mismatched shapes {p.shape}/{g.shape}/{v.shape}")
        v *= cfg.momentum
        v += g
        p -= cfg.learning_rate * v
    return params, velocity


def _test_metrics(stack, test_set, batch_size=256):
    """(accuracy, mean one-hot cross-entropy) of a stack on a labeled set."""
    prev = stack.mode
    stack.set_mode("eval")
    labels = test_set.labels
    if np.any(labels < 0):
        raise ValidationError("metrics need real labels; set contains sentinel rows")
    n = test_set.n
    correct = 0
    loss_sum = 0.0
    for start in range(0, n, batch_size):
        stop = min(start + batch_size, n)
        probs = stack.forward(test_set.images[start:stop])
        batch_labels = labels[start:stop]
        correct += int((probs.argmax(axis=1) == batch_labels).sum())
        p_true = probs[np.arange(stop - start), batch_labels]
        loss_sum += float(-np.log(p_true).sum())
    stack.set_mode(prev)
    return correct / n, loss_sum / n


def train(stack, images, targets, test_set, cfg, progress=None):
    """Train a stack on (images, target distributions) with SGD momentum.

    targets may be one-hot rows or soft rows; the loop never looks at hard
    labels. Each epoch shuffles with the config RNG (which also feeds
    dropout), runs minibatches (final partial batch included), applies
    lr_decay, and evaluates on test_set. Returns (stack, [EpochLog...]);
    the stack is left in eval mode. Same config + same data => identical
    parameters and logs (wall time aside).
    """
    images = np.asarray(images, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    n = images.shape[0]
    if n == 0:
        raise ValidationError("empty training set")
    if targets.ndim != 2 or targets.shape[0] != n:
        raise ShapeError(f"targets shape {targets.shape} does not match {n} images")
    if cfg.batch_size > n:
        raise ValidationError(f"batch_size {cfg.batch_size} exceeds dataset size {n}")

    rng = np.random.default_rng(cfg.seed)
    stack.rng = rng
    params = stack.parameters()
    velocity = [np.zeros_like(p) for p in params]
    lr = cfg.learning_rate
    logs = []
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        stack.set_mode("train")
        order = rng.permutation(n) if cfg.shuffle else np.arange(n)
        epoch_cfg = replace(cfg, learning_rate=lr)
        loss_sum = 0.0
        for start in range(0, n, cfg.batch_size):
            sel = order[start : start + cfg.batch_size]
            probs = stack.forward(images[sel])
            loss_sum += cross_entropy(probs, targets[sel]) * sel.size
            grads = stack.backward(targets[sel])
            sgd_step(params, grads, velocity, epoch_cfg)
        test_accuracy, test_loss = _test_metrics(stack, test_set)
        log = EpochLog(epoch, loss_sum / n, test_loss, test_accuracy,
                       time.perf_counter() - t0)
        logs.append(log)
        if progress is not None:
            progress(log)
        lr *= cfg.lr_decay
    stack.set_mode("eval")
    return stack, logs
