"""SGD training with momentum, weight decay and patience-based LR decay."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dmdetect.errors import DataError, ParameterError
from dmdetect.nncore.network import Network, forward_batch, predict_batch


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    batch_size: int = 64
    epochs: int = 10
    momentum: float = 0.0
    weight_decay: float = 0.0
    lr_decay_factor: float = 1.0
    lr_patience: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ParameterError("learning_rate must be positive")
        if self.batch_size <= 0:
            raise ParameterError("batch_size must be positive")
        if self.epochs < 0:
            raise ParameterError("epochs must be nonnegative")
        if not 0.0 <= self.momentum < 1.0:
            raise ParameterError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ParameterError("weight_decay must be nonnegative")
        if not 0.0 < self.lr_decay_factor <= 1.0:
            raise ParameterError("lr_decay_factor must lie in (0, 1]")
        if self.lr_patience < 0:
            raise ParameterError("lr_patience must be nonnegative")


def init_params(net: Network, seed: int) -> Network:
    """Fan-in-scaled uniform initialization of every trainable layer."""
    rng = np.random.default_rng(seed)
    for layer in net.layers:
        layer.init_params(rng)
    return net


def evaluate_accuracy(net, images, labels, batch_size=512) -> float:
    preds, _ = predict_batch(net, images, batch_size=batch_size)
    return float(np.mean(preds == labels)) if len(labels) else 0.0


def train_sgd(net, train, valid, cfg: TrainConfig):
    """Train in place; returns (net, per-epoch validation accuracy history).

    The learning rate is multiplied by `lr_decay_factor` whenever
    `lr_patience` consecutive epochs pass without a new best validation
    accuracy (no-op when the factor is 1).
    """
    if len(train) == 0 or len(valid) == 0:
        raise DataError("training and validation sets must be nonempty")
    if train.labels.max(initial=0) >= net.num_classes:
        raise DataError("label outside [0, K)")
    rng = np.random.default_rng(cfg.seed)
    velocity = [np.zeros_like(p) for p in net.params()]
    lr = cfg.learning_rate
    best_val = -1.0
    stale = 0
    history: list[float] = []
    n = len(train)
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            xb = train.images[idx]
            yb = train.labels[idx]
            _, probs, trace = forward_batch(
                net, xb, train=True, rng=rng, need_trace=True
            )
            dlogits = probs
            dlogits[np.arange(len(yb)), yb] -= 1.0
            dlogits /= len(yb)
            g = dlogits
            flat = []
            for i in range(len(net.layers) - 1, -1, -1):
                g, pg = net.layers[i].backward(g, trace.caches[i])
                flat.append((i, pg))
            grads = []
            for i, pg in reversed(flat):
                grads.extend(pg)
            params = net.params()
            for p, gr, v in zip(params, grads, velocity):
                gr = gr.astype(np.float32, copy=False)
                if cfg.weight_decay:
                    gr = gr + cfg.weight_decay * p
                v *= cfg.momentum
                v -= lr * gr
                p += v
        val_acc = evaluate_accuracy(net, valid.images, valid.labels)
        history.append(val_acc)
        if val_acc > best_val:
            best_val = val_acc
            stale = 0
        else:
            stale += 1
            if cfg.lr_decay_factor < 1.0 and stale >= cfg.lr_patience:
                lr *= cfg.lr_decay_factor
                stale = 0
    return net, history
