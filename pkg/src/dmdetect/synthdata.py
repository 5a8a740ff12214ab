"""Desk-scale synthetic image datasets written in the canonical binary formats.

The experiment driver consumes MNIST IDX and CIFAR-10 binary files. When the
canonical downloads are unavailable, these generators produce stand-in
datasets of rendered digit glyphs (grayscale 28x28 and color 32x32) with
randomized font, pose and noise, written byte-for-byte in the same formats so
the whole pipeline runs unchanged.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

_FONT_FILES = [
    "DejaVuSans.ttf",
    "DejaVuSans-Bold.ttf",
    "DejaVuSerif.ttf",
    "DejaVuSerif-Bold.ttf",
    "DejaVuSansMono.ttf",
]


def _load_fonts(px_sizes):
    from PIL import ImageFont
    import matplotlib

    font_dir = Path(matplotlib.get_data_path()) / "fonts" / "ttf"
    fonts = []
    for name in _FONT_FILES:
        path = font_dir / name
        if path.exists():
            for sz in px_sizes:
                fonts.append(ImageFont.truetype(str(path), sz))
    if not fonts:
        raise RuntimeError("no TTF fonts found for synthetic rendering")
    return fonts


def _render_glyph(rng, digit, fonts, canvas=64, max_angle=12.0):
    """Rotated glyph bitmap in [0, 1], cropped to its bounding box."""
    from PIL import Image, ImageDraw

    img = Image.new("L", (canvas, canvas), 0)
    draw = ImageDraw.Draw(img)
    font = fonts[rng.integers(len(fonts))]
    draw.text((canvas // 2, canvas // 2), str(digit), fill=255, font=font, anchor="mm")
    angle = float(rng.uniform(-max_angle, max_angle))
    img = img.rotate(angle, resample=Image.BILINEAR, fillcolor=0)
    arr = np.asarray(img, dtype=np.float32) / 255.0
    ys, xs = np.nonzero(arr > 0.05)
    return arr[ys.min() : ys.max() + 1, xs.min() : xs.max() + 1]


def _place(glyph, out_size, rng, fill=0.72, jitter=2):
    """Size-normalize the glyph and paste it near the canvas center.

    The glyph's larger dimension is scaled to about `fill * out_size` pixels,
    mirroring the size normalization of handwritten-digit datasets.
    """
    from PIL import Image

    target = fill * out_size * float(rng.uniform(0.9, 1.1))
    gh, gw = glyph.shape
    s = target / max(gh, gw)
    nh, nw = max(4, int(round(gh * s))), max(4, int(round(gw * s)))
    nh, nw = min(nh, out_size), min(nw, out_size)
    g = Image.fromarray((glyph * 255).astype(np.uint8)).resize((nw, nh), Image.BILINEAR)
    g = np.asarray(g, dtype=np.float32) / 255.0
    out = np.zeros((out_size, out_size), dtype=np.float32)
    oy = (out_size - nh) // 2 + int(rng.integers(-jitter, jitter + 1))
    ox = (out_size - nw) // 2 + int(rng.integers(-jitter, jitter + 1))
    oy = min(max(oy, 0), out_size - nh)
    ox = min(max(ox, 0), out_size - nw)
    out[oy : oy + nh, ox : ox + nw] = g
    return out


def generate_digit_images(n, seed, size=28):
    """(n, 1, size, size) float32 grayscale digit images + labels."""
    rng = np.random.default_rng(seed)
    fonts = _load_fonts((30, 36, 42))
    images = np.zeros((n, 1, size, size), dtype=np.float32)
    labels = rng.integers(0, 10, size=n).astype(np.int64)
    for i in range(n):
        glyph = _render_glyph(rng, labels[i], fonts)
        img = _place(glyph, size, rng)
        if rng.random() < 0.5:
            img = gaussian_filter(img, sigma=float(rng.uniform(0.2, 0.5)))
        img = img + rng.normal(0, rng.uniform(0.0, 0.02), size=img.shape)
        images[i, 0] = np.clip(img, 0.0, 1.0)
    return images, labels


def generate_color_digit_images(n, seed, size=32):
    """(n, 3, size, size) float32 color digit-on-texture images + labels."""
    rng = np.random.default_rng(seed)
    fonts = _load_fonts((34, 40, 46))
    images = np.zeros((n, 3, size, size), dtype=np.float32)
    labels = rng.integers(0, 10, size=n).astype(np.int64)
    for i in range(n):
        glyph = _render_glyph(rng, labels[i], fonts)
        mask = _place(glyph, size, rng, fill=0.78)
        bg = rng.uniform(0.0, 0.6, size=3)
        fg = np.clip(bg + rng.choice([-1, 1]) * rng.uniform(0.35, 0.6, size=3), 0, 1)
        tex = gaussian_filter(rng.normal(0, 0.08, size=(size, size)), sigma=2.0)
        for c in range(3):
            chan = bg[c] + tex + mask * (fg[c] - bg[c])
            chan = chan + rng.normal(0, 0.03, size=chan.shape)
            images[i, c] = np.clip(chan, 0.0, 1.0)
    return images, labels


# --------------------------------------------------------------------------
# Canonical binary writers
# --------------------------------------------------------------------------

def write_idx_pair(images, labels, images_path, labels_path) -> None:
    """Write (N, 1, H, W) [0,1] images and labels as an MNIST IDX pair."""
    n, _, h, w = images.shape
    pix = np.round(images[:, 0] * 255.0).astype(np.uint8)
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", 2051, n, h, w))
        fh.write(pix.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", 2049, n))
        fh.write(np.asarray(labels, dtype=np.uint8).tobytes())


def write_cifar_batch(images, labels, path) -> None:
    """Write (N, 3, 32, 32) [0,1] images as CIFAR-10 3073-byte records."""
    n = len(labels)
    pix = np.round(images * 255.0).astype(np.uint8).reshape(n, -1)
    rec = np.concatenate(
        [np.asarray(labels, dtype=np.uint8)[:, None], pix], axis=1
    )
    with open(path, "wb") as fh:
        fh.write(rec.tobytes())


def make_mnist_like(out_dir, n_train=20000, n_test=4000, seed=1234):
    """Generate and write an MNIST-format stand-in dataset; returns the paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tr_img, tr_lbl = generate_digit_images(n_train, seed)
    te_img, te_lbl = generate_digit_images(n_test, seed + 1)
    paths = {
        "train_images": out_dir / "train-images-idx3-ubyte",
        "train_labels": out_dir / "train-labels-idx1-ubyte",
        "test_images": out_dir / "t10k-images-idx3-ubyte",
        "test_labels": out_dir / "t10k-labels-idx1-ubyte",
    }
    write_idx_pair(tr_img, tr_lbl, paths["train_images"], paths["train_labels"])
    write_idx_pair(te_img, te_lbl, paths["test_images"], paths["test_labels"])
    return paths


def make_cifar_like(out_dir, n_train=16000, n_test=3000, seed=4321):
    """Generate and write a CIFAR-10-format stand-in dataset; returns the paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tr_img, tr_lbl = generate_color_digit_images(n_train, seed)
    te_img, te_lbl = generate_color_digit_images(n_test, seed + 1)
    paths = {
        "train_batch": out_dir / "data_batch_1.bin",
        "test_batch": out_dir / "test_batch.bin",
    }
    write_cifar_batch(tr_img, tr_lbl, paths["train_batch"])
    write_cifar_batch(te_img, te_lbl, paths["test_batch"])
    return paths
