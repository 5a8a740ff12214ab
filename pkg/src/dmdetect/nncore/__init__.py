"""Minimal feedforward network engine: inference, SGD training, input-space derivatives."""

from dmdetect.nncore.layers import (
    Conv2d,
    Dense,
    Dropout,
    Flatten,
    Layer,
    MaxPool2d,
    Normalize,
    ReLU,
)
from dmdetect.nncore.network import (
    Network,
    cross_entropy,
    forward,
    forward_batch,
    input_gradient,
    input_gradient_batch,
    output_jacobian,
    predict_batch,
    softmax,
)
from dmdetect.nncore.training import TrainConfig, evaluate_accuracy, init_params, train_sgd
from dmdetect.nncore.checkpoint import checkpoint_load, checkpoint_save
from dmdetect.nncore.models import cifar_small_cnn_a, cifar_small_cnn_b, mnist_cnn, mnist_mlp

__all__ = [
    "Conv2d",
    "Dense",
    "Dropout",
    "Flatten",
    "Layer",
    "MaxPool2d",
    "Normalize",
    "ReLU",
    "Network",
    "TrainConfig",
    "checkpoint_load",
    "checkpoint_save",
    "cifar_small_cnn_a",
    "cifar_small_cnn_b",
    "cross_entropy",
    "evaluate_accuracy",
    "forward",
    "forward_batch",
    "init_params",
    "input_gradient",
    "input_gradient_batch",
    "mnist_cnn",
    "mnist_mlp",
    "output_jacobian",
    "predict_batch",
    "softmax",
]
