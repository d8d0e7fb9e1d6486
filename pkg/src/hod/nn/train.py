"""Minibatch gradient descent on binary cross-entropy."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from ..preprocess import block_split
from ..seeding import derive_seed

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 30
    batch_size: int = 64
    seed: int = 0
    val_fraction: float = 0.2
    # rescale each minibatch gradient to at most this global L2 norm
    clip_norm: float | None = None

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if not 0 < self.val_fraction < 1:
            raise ValueError("val_fraction must be in (0, 1)")


@dataclass
class TrainResult:
    model: object
    history: list = field(default_factory=list)
    best_epoch: int = -1
    best_val_accuracy: float = float("nan")
    seconds: float = 0.0


def accuracy(model, X, y):
    return float(np.mean(model.predict(X) == y))


def train(model, dataset, config, split=None):
    """Fit ``model`` in place and return the best-validation parameters.

    ``split`` is an optional (train_idx, val_idx) pair; by default the
    dataset is cut into contiguous time blocks.
    """
    counts = dataset.class_counts()
    if len(dataset) == 0 or counts.min() == 0:
        raise ValueError(f"training needs both classes, got counts {counts.tolist()}")
    if split is None:
        split = block_split(len(dataset), config.val_fraction, gap=dataset.width)
    tr, va = split
    X = dataset.X.astype(np.float64)
    y = dataset.y.astype(np.float64)
    Xv, yv = X[va], dataset.y[va]

    rng = np.random.default_rng(derive_seed(config.seed, "batches"))
    params = model.params()
    best = [p.copy() for p in params]
    result = TrainResult(model)
    t0 = time.perf_counter()
    for epoch in range(config.epochs):
        order = tr[rng.permutation(len(tr))]
        total = 0.0
        for lo in range(0, len(order), config.batch_size):
            idx = np.sort(order[lo:lo + config.batch_size])
            loss, grads = model.loss_and_grads(X[idx], y[idx])
            if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads):
                raise TrainingDiverged(
                    f"non-finite loss/gradient at epoch {epoch}, batch {lo // config.batch_size} "
                    f"(lr={config.learning_rate}); lower the learning rate")
            step = config.learning_rate
            if config.clip_norm is not None:
                norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads))
                if norm > config.clip_norm:
                    step *= config.clip_norm / norm
            for p, g in zip(params, grads):
                p -= step * g.reshape(p.shape)
            total += loss * len(idx)
        val_acc = accuracy(model, Xv, yv)
        train_loss = total / len(tr)
        result.history.append({"epoch": epoch, "loss": train_loss, "val_accuracy": val_acc})
        log.debug("epoch %d loss %.5f val_acc %.4f", epoch, train_loss, val_acc)
        if not val_acc <= result.best_val_accuracy:
            result.best_val_accuracy = val_acc
            result.best_epoch = epoch
            best = [p.copy() for p in params]
    for p, b in zip(params, best):
        p[...] = b
    result.seconds = time.perf_counter() - t0
    return result
