"""Bit-exact network checkpoints.

Layout (little-endian throughout):

    magic   "NNCK" (4 bytes)
    version u32 = 1
    count   u32 number of layers
    per layer:
        tag      u8  (see layers.LAYER_TAGS)
        extents  u32 each, fixed per tag:
                 Conv2d: in_channels, out_channels, kernel_h, kernel_w
                 MaxPool2d: window
                 Dense: in_dim, out_dim
                 Normalize: channel count
                 ReLU / Dropout / Flatten: none
        buffers  float32 IEEE-754, in declaration order:
                 Conv2d: weight (out*in*kh*kw), bias (out)
                 Dense: weight (out*in), bias (out)
                 Dropout: p (1 value)
                 Normalize: mean (C), std (C)
"""

from __future__ import annotations

import struct

import numpy as np

from dmdetect.errors import FormatError
from dmdetect.nncore.layers import (
    LAYER_TAGS,
    Conv2d,
    Dense,
    Dropout,
    MaxPool2d,
    Normalize,
)
from dmdetect.nncore.network import Network

MAGIC = b"NNCK"
VERSION = 1

_EXTENT_COUNT = {1: 4, 2: 1, 3: 2, 4: 0, 5: 0, 6: 0, 7: 1}


def checkpoint_save(net: Network, path) -> None:
    parts = [MAGIC, struct.pack("<II", VERSION, len(net.layers))]
    for layer in net.layers:
        parts.append(struct.pack("<B", layer.tag))
        for ext in layer.header_extents():
            parts.append(struct.pack("<I", ext))
        for buf in layer.param_buffers():
            parts.append(np.ascontiguousarray(buf, dtype="<f4").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.blob):
            raise FormatError(
                f"truncated checkpoint: needed {n} bytes for {what} at offset {self.pos}"
            )
        out = self.blob[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def f32s(self, count: int, what: str) -> np.ndarray:
        raw = self.take(4 * count, what)
        return np.frombuffer(raw, dtype="<f4").copy()


def checkpoint_load(path) -> Network:
    with open(path, "rb") as fh:
        blob = fh.read()
    r = _Reader(blob)
    if r.take(4, "magic") != MAGIC:
        raise FormatError("bad magic at offset 0: not an NNCK checkpoint")
    version = r.u32("version")
    if version != VERSION:
        raise FormatError(f"unsupported version {version} at offset 4")
    count = r.u32("layer count")
    layers = []
    for li in range(count):
        tag_off = r.pos
        tag = r.take(1, "layer tag")[0]
        if tag not in LAYER_TAGS:
            raise FormatError(f"unknown layer tag {tag} at offset {tag_off}")
        ext = [r.u32(f"layer {li} extent") for _ in range(_EXTENT_COUNT[tag])]
        if tag == Conv2d.tag:
            layer = Conv2d(*ext)
            in_c, out_c, kh, kw = ext
            layer.weight = r.f32s(out_c * in_c * kh * kw, "conv weight").reshape(
                out_c, in_c, kh, kw
            )
            layer.bias = r.f32s(out_c, "conv bias")
        elif tag == MaxPool2d.tag:
            layer = MaxPool2d(*ext)
        elif tag == Dense.tag:
            in_d, out_d = ext
            layer = Dense(in_d, out_d)
            layer.weight = r.f32s(out_d * in_d, "dense weight").reshape(out_d, in_d)
            layer.bias = r.f32s(out_d, "dense bias")
        elif tag == Dropout.tag:
            layer = Dropout(float(r.f32s(1, "dropout p")[0]))
        elif tag == Normalize.tag:
            (c,) = ext
            mean = r.f32s(c, "normalize mean")
            std = r.f32s(c, "normalize std")
            layer = Normalize(mean, std)
        else:
            layer = LAYER_TAGS[tag]()
        layers.append(layer)
    if r.pos != len(blob):
        raise FormatError(f"trailing {len(blob) - r.pos} bytes at offset {r.pos}")
    dense = [l for l in layers if isinstance(l, Dense)]
    if not dense:
        raise FormatError("checkpoint has no Dense output layer")
    return Network(layers=layers, num_classes=dense[-1].out_dim)
