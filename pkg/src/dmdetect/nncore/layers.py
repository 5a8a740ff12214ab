"""Layer implementations.

All layers operate on batched arrays with the sample axis first. Image
activations are (N, C, H, W); flat activations are (N, D). Computation follows
the dtype of the incoming activations, so running a float64 input through a
float32-parameterized network yields float64 outputs and gradients (used by the
finite-difference tests). Each forward call returns an opaque cache consumed by
the matching backward call; caches are never shared between calls, which keeps
concurrent inference on a frozen network safe.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from dmdetect.errors import ParameterError, ShapeError


class Layer:
    """Base class. Subclasses define `tag` (checkpoint byte) and the API below."""

    tag: int = 0

    def init_params(self, rng: np.random.Generator) -> None:
        """Initialize trainable parameters in place. Default: nothing to do."""

    def params(self) -> list[np.ndarray]:
        """Trainable parameter arrays, mutated in place by the optimizer."""
        return []

    def forward(self, x, *, train=False, rng=None):
        raise NotImplementedError

    def backward(self, grad_y, cache):
        """Return (grad_x, [grad per params() entry])."""
        raise NotImplementedError

    # -- checkpoint schema -------------------------------------------------
    def header_extents(self) -> tuple[int, ...]:
        return ()

    def param_buffers(self) -> list[np.ndarray]:
        """Float32 buffers written after the extents; default: the parameters."""
        return self.params()


def _glorot_uniform(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(np.float32)


class Conv2d(Layer):
    """Valid (unpadded) stride-1 convolution, implemented via im2col."""

    tag = 1

    def __init__(self, in_channels, out_channels, kernel_h, kernel_w):
        if min(in_channels, out_channels, kernel_h, kernel_w) <= 0:
            raise ParameterError("Conv2d extents must be positive")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_h = kernel_h
        self.kernel_w = kernel_w
        self.weight = np.zeros(
            (out_channels, in_channels, kernel_h, kernel_w), dtype=np.float32
        )
        self.bias = np.zeros(out_channels, dtype=np.float32)

    def init_params(self, rng):
        fan_in = self.in_channels * self.kernel_h * self.kernel_w
        fan_out = self.out_channels * self.kernel_h * self.kernel_w
        self.weight = _glorot_uniform(rng, self.weight.shape, fan_in, fan_out)
        self.bias = np.zeros(self.out_channels, dtype=np.float32)

    def params(self):
        return [self.weight, self.bias]

    def forward(self, x, *, train=False, rng=None):
        n, c, h, w = x.shape
        kh, kw = self.kernel_h, self.kernel_w
        if c != self.in_channels:
            raise ShapeError(
                f"Conv2d expects {self.in_channels} input channels, got {c}"
            )
        if h < kh or w < kw:
            raise ShapeError(f"input {h}x{w} smaller than kernel {kh}x{kw}")
        oh, ow = h - kh + 1, w - kw + 1
        win = sliding_window_view(x, (kh, kw), axis=(2, 3))  # (N,C,OH,OW,kh,kw)
        cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(
            n, oh * ow, c * kh * kw
        )
        wmat = self.weight.reshape(self.out_channels, -1)
        y = cols @ wmat.T.astype(x.dtype, copy=False) + self.bias.astype(x.dtype)
        y = y.reshape(n, oh, ow, self.out_channels).transpose(0, 3, 1, 2)
        return y, (cols, x.shape, x.dtype)

    def backward(self, grad_y, cache):
        cols, x_shape, dtype = cache
        n, c, h, w = x_shape
        kh, kw = self.kernel_h, self.kernel_w
        oh, ow = h - kh + 1, w - kw + 1
        g = grad_y.transpose(0, 2, 3, 1).reshape(n, oh * ow, self.out_channels)
        wmat = self.weight.reshape(self.out_channels, -1)
        grad_w = np.einsum("npo,npk->ok", g, cols).reshape(self.weight.shape)
        grad_b = g.sum(axis=(0, 1))
        gcols = (g @ wmat.astype(g.dtype, copy=False)).reshape(n, oh, ow, c, kh, kw)
        grad_x = np.zeros(x_shape, dtype=g.dtype)
        for i in range(kh):
            for j in range(kw):
                grad_x[:, :, i : i + oh, j : j + ow] += gcols[:, :, :, :, i, j].transpose(
                    0, 3, 1, 2
                )
        return grad_x, [grad_w, grad_b]

    def header_extents(self):
        return (self.in_channels, self.out_channels, self.kernel_h, self.kernel_w)


class MaxPool2d(Layer):
    """Non-overlapping max pooling with a square window (stride = window)."""

    tag = 2

    def __init__(self, window):
        if window <= 0:
            raise ParameterError("MaxPool2d window must be positive")
        self.window = window

    def forward(self, x, *, train=False, rng=None):
        n, c, h, w = x.shape
        s = self.window
        oh, ow = h // s, w // s
        if oh == 0 or ow == 0:
            raise ShapeError(f"input {h}x{w} smaller than pool window {s}")
        r = x[:, :, : oh * s, : ow * s].reshape(n, c, oh, s, ow, s)
        r = np.ascontiguousarray(r.transpose(0, 1, 2, 4, 3, 5)).reshape(
            n, c, oh, ow, s * s
        )
        idx = r.argmax(axis=-1)
        y = np.take_along_axis(r, idx[..., None], axis=-1)[..., 0]
        return y, (idx, x.shape)

    def backward(self, grad_y, cache):
        idx, x_shape = cache
        n, c, h, w = x_shape
        s = self.window
        oh, ow = h // s, w // s
        gr = np.zeros((n, c, oh, ow, s * s), dtype=grad_y.dtype)
        np.put_along_axis(gr, idx[..., None], grad_y[..., None], axis=-1)
        grad_x = np.zeros(x_shape, dtype=grad_y.dtype)
        grad_x[:, :, : oh * s, : ow * s] = (
            gr.reshape(n, c, oh, ow, s, s).transpose(0, 1, 2, 4, 3, 5).reshape(
                n, c, oh * s, ow * s
            )
        )
        return grad_x, []

    def header_extents(self):
        return (self.window,)


class Dense(Layer):
    tag = 3

    def __init__(self, in_dim, out_dim):
        if in_dim <= 0 or out_dim <= 0:
            raise ParameterError("Dense extents must be positive")
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.weight = np.zeros((out_dim, in_dim), dtype=np.float32)
        self.bias = np.zeros(out_dim, dtype=np.float32)

    def init_params(self, rng):
        self.weight = _glorot_uniform(
            rng, self.weight.shape, self.in_dim, self.out_dim
        )
        self.bias = np.zeros(self.out_dim, dtype=np.float32)

    def params(self):
        return [self.weight, self.bias]

    def forward(self, x, *, train=False, rng=None):
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ShapeError(
                f"Dense expects (N, {self.in_dim}) input, got {x.shape}"
            )
        y = x @ self.weight.T.astype(x.dtype, copy=False) + self.bias.astype(x.dtype)
        return y, x

    def backward(self, grad_y, cache):
        x = cache
        grad_w = grad_y.T @ x
        grad_b = grad_y.sum(axis=0)
        grad_x = grad_y @ self.weight.astype(grad_y.dtype, copy=False)
        return grad_x, [grad_w, grad_b]

    def header_extents(self):
        return (self.in_dim, self.out_dim)


class ReLU(Layer):
    tag = 4

    def forward(self, x, *, train=False, rng=None):
        mask = x > 0
        return x * mask, mask

    def backward(self, grad_y, cache):
        return grad_y * cache, []


class Dropout(Layer):
    """Inverted dropout: train-time mask Bernoulli(1-p) scaled by 1/(1-p)."""

    tag = 5

    def __init__(self, p):
        if not 0.0 <= p < 1.0:
            raise ParameterError(f"dropout probability {p} outside [0, 1)")
        self.p = float(p)

    def forward(self, x, *, train=False, rng=None):
        if not train or self.p == 0.0:
            return x, None
        if rng is None:
            raise ParameterError("train-mode dropout requires an RNG")
        mask = (rng.random(x.shape) >= self.p).astype(x.dtype) / (1.0 - self.p)
        return x * mask, mask

    def backward(self, grad_y, cache):
        if cache is None:
            return grad_y, []
        return grad_y * cache, []

    def param_buffers(self):
        return [np.asarray([self.p], dtype=np.float32)]


class Flatten(Layer):
    tag = 6

    def forward(self, x, *, train=False, rng=None):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, grad_y, cache):
        return grad_y.reshape(cache), []


class Normalize(Layer):
    """Frozen per-channel standardization; keeps attacks in raw [0,1] pixel space."""

    tag = 7

    def __init__(self, mean, std):
        mean = np.asarray(mean, dtype=np.float32).reshape(-1)
        std = np.asarray(std, dtype=np.float32).reshape(-1)
        if mean.shape != std.shape:
            raise ParameterError("Normalize mean/std length mismatch")
        if np.any(std <= 0):
            raise ParameterError("Normalize std entries must be positive")
        self.mean = mean
        self.std = std

    def forward(self, x, *, train=False, rng=None):
        if x.ndim != 4 or x.shape[1] != self.mean.shape[0]:
            raise ShapeError(
                f"Normalize expects {self.mean.shape[0]} channels, got {x.shape}"
            )
        m = self.mean.reshape(1, -1, 1, 1).astype(x.dtype)
        s = self.std.reshape(1, -1, 1, 1).astype(x.dtype)
        return (x - m) / s, None

    def backward(self, grad_y, cache):
        s = self.std.reshape(1, -1, 1, 1).astype(grad_y.dtype)
        return grad_y / s, []

    def header_extents(self):
        return (self.mean.shape[0],)

    def param_buffers(self):
        return [self.mean, self.std]


LAYER_TAGS = {
    cls.tag: cls
    for cls in (Conv2d, MaxPool2d, Dense, ReLU, Dropout, Flatten, Normalize)
}
