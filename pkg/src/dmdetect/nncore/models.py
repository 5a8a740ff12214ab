"""Reference architectures for the two-model detection pipeline."""

from __future__ import annotations

from dmdetect.nncore.layers import (
    Conv2d,
    Dense,
    Dropout,
    Flatten,
    MaxPool2d,
    Normalize,
    ReLU,
)
from dmdetect.nncore.network import Network


def mnist_cnn() -> Network:
    """conv(5x5,10) -> pool(2) -> conv(5x5,20) -> pool(2) -> fc(320,50) -> fc(50,10).

    Valid convolutions, stride 1: 28 -> 24 -> 12 -> 8 -> 4, so the flattened
    width is 20*4*4 = 320.
    """
    layers = [
        Conv2d(1, 10, 5, 5),
        MaxPool2d(2),
        ReLU(),
        Conv2d(10, 20, 5, 5),
        MaxPool2d(2),
        ReLU(),
        Flatten(),
        Dense(320, 50),
        ReLU(),
        Dropout(0.5),
        Dense(50, 10),
    ]
    return Network(layers, num_classes=10, input_shape=(1, 28, 28))


def mnist_mlp() -> Network:
    layers = [
        Flatten(),
        Dense(784, 320),
        ReLU(),
        Dropout(0.5),
        Dense(320, 50),
        ReLU(),
        Dropout(0.5),
        Dense(50, 10),
    ]
    return Network(layers, num_classes=10, input_shape=(1, 28, 28))


def cifar_small_cnn_a(mean, std) -> Network:
    """Two 5x5 conv blocks; desk-scale stand-in for a deep CIFAR model."""
    layers = [
        Normalize(mean, std),
        Conv2d(3, 16, 5, 5),
        MaxPool2d(2),
        ReLU(),
        Conv2d(16, 32, 5, 5),
        MaxPool2d(2),
        ReLU(),
        Flatten(),
        Dense(32 * 5 * 5, 128),
        ReLU(),
        Dropout(0.5),
        Dense(128, 10),
    ]
    return Network(layers, num_classes=10, input_shape=(3, 32, 32))


def cifar_small_cnn_b(mean, std) -> Network:
    """Deeper/narrower 3x3 stack with different pooling; structurally distinct
    from cifar_small_cnn_a on purpose."""
    layers = [
        Normalize(mean, std),
        Conv2d(3, 12, 3, 3),
        ReLU(),
        Conv2d(12, 24, 3, 3),
        MaxPool2d(2),
        ReLU(),
        Conv2d(24, 48, 3, 3),
        MaxPool2d(3),
        ReLU(),
        Flatten(),
        Dense(48 * 4 * 4, 64),
        ReLU(),
        Dropout(0.3),
        Dense(64, 10),
    ]
    return Network(layers, num_classes=10, input_shape=(3, 32, 32))
