"""Dataset containers and canonical binary loaders (MNIST IDX, CIFAR-10)."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from dmdetect.errors import DataError, FormatError, ParameterError

IDX_IMAGE_MAGIC = 2051
IDX_LABEL_MAGIC = 2049
CIFAR_RECORD_LEN = 3073  # 1 label byte + 3 * 32 * 32 pixel bytes


@dataclass
class LabeledImage:
    pixels: np.ndarray  # (C, H, W) float32 in [0, 1]
    label: int


@dataclass
class Dataset:
    """Immutable stack of labeled images (images (N,C,H,W), labels (N,))."""

    images: np.ndarray
    labels: np.ndarray
    num_classes: int
    name: str = ""

    def __len__(self) -> int:
        return len(self.labels)

    def __getitem__(self, i: int) -> LabeledImage:
        return LabeledImage(self.images[i], int(self.labels[i]))

    def slice(self, idx) -> "Dataset":
        return Dataset(self.images[idx], self.labels[idx], self.num_classes, self.name)


def _read_u32_be(blob: bytes, offset: int, what: str) -> int:
    if offset + 4 > len(blob):
        raise FormatError(f"truncated file: {what} at offset {offset}")
    return struct.unpack_from(">I", blob, offset)[0]


def load_mnist_idx(images_path, labels_path) -> Dataset:
    """Parse the big-endian IDX pair into a (N, 1, 28, 28) dataset in [0, 1]."""
    with open(images_path, "rb") as fh:
        img_blob = fh.read()
    with open(labels_path, "rb") as fh:
        lbl_blob = fh.read()

    magic = _read_u32_be(img_blob, 0, "image magic")
    if magic != IDX_IMAGE_MAGIC:
        raise FormatError(f"bad image magic {magic} at offset 0 (expected 2051)")
    n = _read_u32_be(img_blob, 4, "image count")
    rows = _read_u32_be(img_blob, 8, "row count")
    cols = _read_u32_be(img_blob, 12, "column count")
    expected = 16 + n * rows * cols
    if len(img_blob) != expected:
        raise FormatError(
            f"image file length {len(img_blob)} != {expected} implied by header"
        )

    lmagic = _read_u32_be(lbl_blob, 0, "label magic")
    if lmagic != IDX_LABEL_MAGIC:
        raise FormatError(f"bad label magic {lmagic} at offset 0 (expected 2049)")
    ln = _read_u32_be(lbl_blob, 4, "label count")
    if ln != n:
        raise FormatError(f"label count {ln} != image count {n}")
    if len(lbl_blob) != 8 + ln:
        raise FormatError(
            f"label file length {len(lbl_blob)} != {8 + ln} implied by header"
        )

    pixels = np.frombuffer(img_blob, dtype=np.uint8, offset=16)
    images = (pixels.astype(np.float32) / 255.0).reshape(n, 1, rows, cols)
    labels = np.frombuffer(lbl_blob, dtype=np.uint8, offset=8).astype(np.int64)
    if labels.size and labels.max() > 9:
        raise FormatError(f"label {labels.max()} outside 0..9")
    return Dataset(images, labels, num_classes=10, name="mnist")


def load_cifar10(batch_paths) -> Dataset:
    """Parse CIFAR-10 binary batches (3073-byte records, channel-major RGB)."""
    all_images, all_labels = [], []
    for path in batch_paths:
        with open(path, "rb") as fh:
            blob = fh.read()
        if len(blob) == 0 or len(blob) % CIFAR_RECORD_LEN != 0:
            raise FormatError(
                f"{path}: length {len(blob)} is not a positive multiple of {CIFAR_RECORD_LEN}"
            )
        rec = np.frombuffer(blob, dtype=np.uint8).reshape(-1, CIFAR_RECORD_LEN)
        labels = rec[:, 0].astype(np.int64)
        if labels.max() > 9:
            raise FormatError(f"{path}: label {labels.max()} outside 0..9")
        images = (rec[:, 1:].astype(np.float32) / 255.0).reshape(-1, 3, 32, 32)
        all_images.append(images)
        all_labels.append(labels)
    return Dataset(
        np.concatenate(all_images),
        np.concatenate(all_labels),
        num_classes=10,
        name="cifar10",
    )


def sample_subset(d: Dataset, n: int, seed: int) -> Dataset:
    """n distinct items in seed-determined order; same seed, same subset."""
    if n > len(d):
        raise ParameterError(f"requested {n} items from a dataset of {len(d)}")
    rng = np.random.default_rng(seed)
    idx = rng.permutation(len(d))[:n]
    return d.slice(idx)


def channel_stats(d: Dataset):
    """Per-channel population (mean, std) over every pixel; std floored at 1e-6."""
    if len(d) == 0:
        raise DataError("channel_stats on empty dataset")
    mean = d.images.mean(axis=(0, 2, 3))
    std = np.maximum(d.images.std(axis=(0, 2, 3)), 1e-6)
    return mean.astype(np.float32), std.astype(np.float32)
