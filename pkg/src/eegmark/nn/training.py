"""Adam training loop, evaluation and finite-difference gradient checking."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from ..errors import ConfigError, DivergenceError, EmptyDataset
from .network import Network, cross_entropy

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 64
    epochs: int = 20
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    early_stop_patience: int | None = 5
    shuffle_seed: int = 0
    min_epochs: int = 0  # early stopping cannot end training before this many epochs
    clip_norm: float | None = None  # global gradient-norm clip, applied before Adam

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ConfigError("learning_rate must be non-negative")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1")
        if self.epochs < 0:
            raise ConfigError("epochs must be non-negative")
        if self.min_epochs < 0:
            raise ConfigError("min_epochs must be non-negative")
        if self.clip_norm is not None and not self.clip_norm > 0:
            raise ConfigError("clip_norm must be positive")


@dataclass
class Metrics:
    accuracy: float
    mean_loss: float
    confusion: np.ndarray = field(repr=False)

    @property
    def count(self) -> int:
        return int(self.confusion.sum())


@dataclass
class EpochLog:
    epoch: int
    train: Metrics
    val: Metrics | None = None


def as_arrays(dataset) -> tuple[np.ndarray, np.ndarray]:
    """Accept an object with ``samples``/``labels`` or an ``(X, y)`` pair."""
    if hasattr(dataset, "samples"):
        return np.asarray(dataset.samples), np.asarray(dataset.labels)
    X, y = dataset
    return np.asarray(X), np.asarray(y)


def _confusion(y_true, y_pred, k) -> np.ndarray:
    return np.bincount(y_true * k + y_pred, minlength=k * k).reshape(k, k)


def evaluate(network: Network, dataset, batch_size: int = 512) -> Metrics:
    X, y = as_arrays(dataset)
    if len(X) == 0:
        raise EmptyDataset("cannot evaluate on an empty dataset")
    k = network.config.num_labels
    preds, loss_sum = [], 0.0
    for i in range(0, len(X), batch_size):
        logits = network.forward(X[i : i + batch_size])
        loss, _ = cross_entropy(logits, y[i : i + batch_size])
        loss_sum += loss * len(logits)
        preds.append(logits.argmax(axis=1))
    pred = np.concatenate(preds)
    return Metrics(float(np.mean(pred == y)), loss_sum / len(X), _confusion(y.astype(int), pred, k))


class Adam:
    def __init__(self, network: Network, cfg: TrainConfig, trainable: Iterable[int]):
        self.cfg = cfg
        self.trainable = sorted(trainable)
        self.t = 0
        self.m = {i: {k: np.zeros_like(v) for k, v in network.params[i].items()} for i in self.trainable}
        self.v = {i: {k: np.zeros_like(v) for k, v in network.params[i].items()} for i in self.trainable}

    def step(self, network: Network, grads: list[dict]) -> None:
        c = self.cfg
        self.t += 1
        bc1 = 1.0 - c.beta1 ** self.t
        bc2 = 1.0 - c.beta2 ** self.t
        for i in self.trainable:
            for k, g in grads[i].items():
                m, v = self.m[i][k], self.v[i][k]
                m *= c.beta1
                m += (1.0 - c.beta1) * g
                v *= c.beta2
                v += (1.0 - c.beta2) * (g * g)
                update = c.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + c.eps)
                network.params[i][k] -= update.astype(network.params[i][k].dtype)


def clip_gradients(grads: list[dict], max_norm: float) -> list[dict]:
    """Scale all gradients together so their global L2 norm is at most ``max_norm``."""
    norm = np.sqrt(sum(float(np.sum(g * g)) for d in grads for g in d.values()))
    if norm <= max_norm:
        return grads
    scale = max_norm / norm
    return [{k: g * scale for k, g in d.items()} for d in grads]


def train(network: Network, train_set, val_set=None, cfg: TrainConfig = TrainConfig(),
          trainable: Iterable[int] | None = None,
          on_epoch: Callable[[int, Network], None] | None = None) -> tuple[Network, list[EpochLog]]:
    """Train ``network`` in place with Adam on softmax cross-entropy.

    Stops early once the validation loss has not improved for
    ``cfg.early_stop_patience`` consecutive epochs, but never before
    ``cfg.min_epochs`` epochs have run.  Only layers listed in
    ``trainable`` (default: all) are updated.  ``on_epoch(epoch, network)``
    runs after every epoch.
    """
    X, y = as_arrays(train_set)
    if len(X) == 0:
        raise EmptyDataset("training set is empty")
    k = network.config.num_labels
    if y.min() < 0 or y.max() >= k:
        raise ValueError(f"labels must lie in [0, {k})")
    trainable = network.param_layers() if trainable is None else sorted(trainable)
    opt = Adam(network, cfg, trainable)
    logs: list[EpochLog] = []
    best, stale = np.inf, 0
    for epoch in range(cfg.epochs):
        rng = np.random.default_rng([cfg.shuffle_seed, epoch])
        order = rng.permutation(len(X))
        loss_sum, correct = 0.0, 0
        conf = np.zeros((k, k), dtype=np.int64)
        for start in range(0, len(X), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            xb, yb = X[idx], y[idx]
            loss, grads = network.loss_and_grads(xb, yb, training=True, rng=rng, trainable=trainable)
            if not np.isfinite(loss):
                raise DivergenceError(epoch)
            if cfg.clip_norm is not None:
                grads = clip_gradients(grads, cfg.clip_norm)
            opt.step(network, grads)
            loss_sum += loss * len(idx)
        # training metrics are re-measured in eval mode so they are comparable to validation
        train_metrics = evaluate(network, (X, y))
        train_metrics.mean_loss = loss_sum / len(X)
        val_metrics = evaluate(network, val_set) if val_set is not None and len(as_arrays(val_set)[0]) else None
        logs.append(EpochLog(epoch, train_metrics, val_metrics))
        if on_epoch is not None:
            on_epoch(epoch, network)
        log.debug("epoch %d loss %.4f acc %.3f", epoch, train_metrics.mean_loss, train_metrics.accuracy)
        if val_metrics is not None and cfg.early_stop_patience is not None:
            if val_metrics.mean_loss < best:
                best, stale = val_metrics.mean_loss, 0
            else:
                stale += 1
                if stale >= cfg.early_stop_patience and epoch + 1 >= cfg.min_epochs:
                    log.info("early stop after epoch %d", epoch)
                    break
    return network, logs


def gradient_check(network: Network, sample, epsilon: float = 1e-4, num_params: int = 100,
                   seed: int = 0) -> float:
    """Max relative error between backprop and central differences.

    Runs on a float64 copy in eval mode over ``num_params`` randomly chosen
    scalar parameters (all of them if the network has fewer).
    """
    x, label = sample
    net = network.astype(np.float64)
    xb = np.asarray(x, dtype=np.float64)
    if xb.shape == net.config.input_shape:
        xb = xb[None]
    yb = np.atleast_1d(np.asarray(label, dtype=int))
    _, grads = net.loss_and_grads(xb, yb)

    slots = [(i, k, a.size) for i in net.param_layers() for k, a in net.params[i].items()]
    total = sum(s for _, _, s in slots)
    rng = np.random.default_rng(seed)
    picks = rng.choice(total, size=min(num_params, total), replace=False)
    bounds = np.cumsum([s for _, _, s in slots])

    worst = 0.0
    for flat in picks:
        j = int(np.searchsorted(bounds, flat, side="right"))
        i, k, _ = slots[j]
        pos = flat - (bounds[j - 1] if j else 0)
        arr = net.params[i][k].reshape(-1)
        orig = arr[pos]
        arr[pos] = orig + epsilon
        lp, _ = cross_entropy(net.forward(xb), yb)
        arr[pos] = orig - epsilon
        lm, _ = cross_entropy(net.forward(xb), yb)
        arr[pos] = orig
        numeric = (lp - lm) / (2 * epsilon)
        analytic = grads[i][k].reshape(-1)[pos]
        denom = max(abs(numeric) + abs(analytic), 1e-7)
        worst = max(worst, abs(numeric - analytic) / denom)
    if not np.isfinite(worst):
        return float("nan")
    return float(worst)
