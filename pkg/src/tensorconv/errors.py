"""Exception types shared across the library."""


class TensorConvError(Exception):
    """Base class for all tensorconv errors."""


class DimensionMismatch(TensorConvError):
    """Operands disagree on the dimensions an operation requires."""


class OrderError(TensorConvError):
    """A contraction order is invalid for the operands."""


class RangeError(TensorConvError):
    """An index or sub-array range leaves the bounds of a tensor."""


class GeometryError(TensorConvError):
    """Filter, stride, padding or pooling geometry is inconsistent."""


class DomainError(TensorConvError):
    """Tensor coordinates violate the domain of a loss function."""


class EmptyBatch(TensorConvError):
    """An operation over samples received an empty batch."""


class DatasetFormatError(TensorConvError):
    """A dataset, tensor or model file does not parse."""


class ConfigError(TensorConvError):
    """A run configuration file is invalid."""
