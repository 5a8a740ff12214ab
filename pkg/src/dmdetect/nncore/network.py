"""Network container plus forward/backward entry points.

A frozen (eval-mode) Network is immutable during inference: forward passes
allocate fresh traces, so concurrent calls against the same instance are safe.
Training mutates parameters and must be single-writer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from dmdetect.errors import LabelError, ShapeError
from dmdetect.nncore.layers import Dense, Layer

PROB_FLOOR = 1e-12  # clamp before log so the loss never reaches -inf


@dataclass
class Network:
    layers: list[Layer]
    num_classes: int
    input_shape: tuple[int, int, int] | None = None

    def __post_init__(self):
        dense = [l for l in self.layers if isinstance(l, Dense)]
        if dense and dense[-1].out_dim != self.num_classes:
            raise ShapeError(
                f"final Dense outputs {dense[-1].out_dim}, expected {self.num_classes}"
            )

    def params(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.params()]


@dataclass
class ForwardTrace:
    """Per-call layer caches (activations, argmax indices, dropout masks)."""

    caches: list = field(default_factory=list)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _check_input(net: Network, x: np.ndarray) -> None:
    if net.input_shape is not None and tuple(x.shape[1:]) != tuple(net.input_shape):
        raise ShapeError(
            f"input shape {tuple(x.shape[1:])} does not match declared {net.input_shape}"
        )


def forward_batch(net, x, *, train=False, rng=None, need_trace=False):
    """Run a batch (N, C, H, W) through the stack.

    Returns (logits, probs, trace); trace is None unless requested. Eval mode
    is deterministic and ignores the RNG.
    """
    x = np.asarray(x)
    if x.ndim == 3:
        raise ShapeError("forward_batch expects a batch with a leading sample axis")
    _check_input(net, x)
    caches = [] if need_trace else None
    h = x
    for layer in net.layers:
        h, cache = layer.forward(h, train=train, rng=rng)
        if need_trace:
            caches.append(cache)
    logits = h
    if logits.ndim != 2 or logits.shape[1] != net.num_classes:
        raise ShapeError(
            f"network produced shape {logits.shape}, expected (N, {net.num_classes})"
        )
    probs = softmax(logits)
    trace = ForwardTrace(caches) if need_trace else None
    return logits, probs, trace


def forward(net, x, *, train=False, seed=0):
    """Single-image forward pass; returns (logits[K], probs[K], trace)."""
    x = np.asarray(x)
    rng = np.random.default_rng(seed) if train else None
    logits, probs, trace = forward_batch(
        net, x[None], train=train, rng=rng, need_trace=True
    )
    return logits[0], probs[0], trace


def backward_batch(net, trace, grad_logits):
    """Backpropagate d(loss)/d(logits); returns (grad_x, per-layer param grads)."""
    g = grad_logits
    param_grads = [None] * len(net.layers)
    for i in range(len(net.layers) - 1, -1, -1):
        g, pg = net.layers[i].backward(g, trace.caches[i])
        param_grads[i] = pg
    return g, param_grads


def cross_entropy(probs, y):
    """-log p_y with the probability floor clamp."""
    probs = np.asarray(probs)
    if not 0 <= y < probs.shape[-1]:
        raise LabelError(f"label {y} outside [0, {probs.shape[-1]})")
    return float(-np.log(max(float(probs[y]), PROB_FLOOR)))


def input_gradient_batch(net, x, ys):
    """Gradient of the summed cross-entropy w.r.t. each input in the batch."""
    x = np.asarray(x)
    ys = np.asarray(ys)
    if np.any(ys < 0) or np.any(ys >= net.num_classes):
        raise LabelError("label outside [0, K)")
    _, probs, trace = forward_batch(net, x, train=False, need_trace=True)
    dlogits = probs.copy()
    dlogits[np.arange(len(ys)), ys] -= 1.0
    grad_x, _ = backward_batch(net, trace, dlogits)
    return grad_x


def input_gradient(net, x, y):
    """Exact backpropagated gradient of the cross-entropy loss at (x, y)."""
    x = np.asarray(x)
    return input_gradient_batch(net, x[None], np.asarray([y]))[0]


def output_jacobian(net, x, space="softmax"):
    """Jacobian of the K outputs w.r.t. the input pixels, shape (K, *x.shape).

    One batched backward pass: the input is tiled K times and each replica is
    seeded with the corresponding output row.
    """
    if space not in ("softmax", "logits"):
        raise ValueError(f"unknown output space {space!r}")
    x = np.asarray(x)
    k = net.num_classes
    xs = np.broadcast_to(x, (k,) + x.shape).copy()
    _, probs, trace = forward_batch(net, xs, train=False, need_trace=True)
    if space == "logits":
        dlogits = np.eye(k, dtype=x.dtype)
    else:
        p = probs[0]
        # row k of d(softmax)/d(logits): p_k * (e_k - p)
        dlogits = p[:, None] * (np.eye(k, dtype=p.dtype) - p[None, :])
    grad_x, _ = backward_batch(net, trace, dlogits)
    return grad_x


def predict_batch(net, x, batch_size=512):
    """Eval-mode argmax labels and probs for a stack of images."""
    x = np.asarray(x)
    out = []
    for i in range(0, len(x), batch_size):
        _, probs, _ = forward_batch(net, x[i : i + batch_size])
        out.append(probs)
    probs = np.concatenate(out) if out else np.zeros((0, net.num_classes))
    return probs.argmax(axis=1), probs
