"""Adversarial-example detection through decision mismatch.

Two structurally distinct classifiers are trained on the same task; the
concatenation of their softmax outputs is used as the feature vector of a
binary detector (RBF-kernel SVM) that separates clean inputs from
minimal-budget white-box attacks.
"""

from dmdetect.errors import (
    DataError,
    FormatError,
    LabelError,
    ModelPairError,
    ParameterError,
    ShapeError,
    TrainingError,
)

__all__ = [
    "DataError",
    "FormatError",
    "LabelError",
    "ModelPairError",
    "ParameterError",
    "ShapeError",
    "TrainingError",
]
