"""SGD training loop with momentum for the small network engine."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..seeding import rng_from


class TrainingDiverged(RuntimeError):
    def __init__(self, step: int, loss):
        super().__init__(f"non-finite loss {loss} at step {step}")
        self.step = step


@dataclass(frozen=True)
class TrainConfig:
    lr: float
    momentum: float = 0.9
    batch_size: int = 128
    epochs: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError(f"lr must be nonnegative, got {self.lr}")
        if not 0 <= self.momentum < 1:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")


@dataclass
class TrainHistory:
    step_losses: list = field(default_factory=list)
    epoch_losses: list = field(default_factory=list)


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy and its logits gradient."""
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    n = logits.shape[0]
    rows = np.arange(n)
    loss = -logp[rows, labels].mean()
    dlogits = np.exp(logp)
    dlogits[rows, labels] -= 1.0
    dlogits /= n
    return loss, dlogits.astype(logits.dtype, copy=False)


def _as_arrays(dataset):
    if isinstance(dataset, tuple):
        images, labels = dataset
    else:
        images, labels = dataset.images, dataset.labels
    images = np.asarray(images)
    labels = np.asarray(labels)
    if len(images) == 0:
        raise ValueError("dataset is empty")
    if len(images) != len(labels):
        raise ValueError(f"{len(images)} images but {len(labels)} labels")
    return images, labels


def train_sgd(net, dataset, hyper: TrainConfig):
    """Trains in place; returns (net, TrainHistory).

    Each epoch visits every example once in a freshly shuffled order derived
    from the config seed.  Batch-norm layers run in train mode (batch
    statistics, running averages updated).  A non-finite loss aborts with the
    offending step index.
    """
    images, labels = _as_arrays(dataset)
    if labels.min() < 0 or labels.max() >= net.classes:
        raise ValueError(f"labels outside 0..{net.classes - 1}")
    rng = rng_from(hyper.seed, "data-order")
    velocity = {path: np.zeros_like(p) for path, p, _ in net.param_items()}
    history = TrainHistory()
    step = 0
    for _ in range(hyper.epochs):
        perm = rng.permutation(len(images))
        epoch_sum = 0.0
        for start in range(0, len(images), hyper.batch_size):
            idx = perm[start : start + hyper.batch_size]
            net.zero_grads()
            logits, _ = net.forward(images[idx], train=True)
            loss, dlogits = softmax_cross_entropy(logits, labels[idx])
            if not np.isfinite(loss):
                raise TrainingDiverged(step, loss)
            net.backward(dlogits)
            mu = net.dtype.type(hyper.momentum)
            lr = net.dtype.type(hyper.lr)
            for path, p, g in net.param_items():
                v = velocity[path]
                v *= mu
                v += g
                p -= lr * v
            history.step_losses.append(float(loss))
            epoch_sum += float(loss) * len(idx)
            step += 1
        history.epoch_losses.append(epoch_sum / len(images))
    return net, history


def evaluate(net, dataset, batch_size=256):
    """Eval-mode top-1 accuracy."""
    images, labels = _as_arrays(dataset)
    hits = 0
    for start in range(0, len(images), batch_size):
        logits, _ = net.forward(images[start : start + batch_size], train=False)
        hits += int((logits.argmax(axis=1) == labels[start : start + batch_size]).sum())
    return hits / len(images)
