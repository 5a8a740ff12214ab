"""Exception taxonomy shared across the package."""


class DmdetectError(Exception):
    """Base class for all package-specific errors."""


class ShapeError(DmdetectError, ValueError):
    """Tensor shape incompatible with the operation or the network input."""


class LabelError(DmdetectError, ValueError):
    """Class label outside [0, K)."""


class FormatError(DmdetectError, ValueError):
    """Malformed binary or CSV input; message names the offending offset/line."""


class DataError(DmdetectError, ValueError):
    """Empty or otherwise unusable dataset."""


class ParameterError(DmdetectError, ValueError):
    """Invalid operation parameter (bad grid, bad fold count, ...)."""


class ModelPairError(DmdetectError, ValueError):
    """The two detector models disagree on input shape or class count."""


class TrainingError(DmdetectError, RuntimeError):
    """Training cannot proceed (single-class data, divergence, ...)."""
