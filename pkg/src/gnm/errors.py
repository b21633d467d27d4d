"""Exception types shared across the package."""


class GnmError(Exception):
    """Base class for all library errors."""


class ShapeError(GnmError, ValueError):
    """Operands have incompatible dimensions."""


class NumericError(GnmError, ArithmeticError):
    """A non-finite value appeared where finite math was required."""

    def __init__(self, message, step=None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step


class TrainingDiverged(GnmError, RuntimeError):
    """Training produced a non-finite loss or state."""

    def __init__(self, message, epoch):
        super().__init__(f"{message} (epoch {epoch})")
        self.epoch = epoch


class DataError(GnmError, ValueError):
    """A dataset could not be ingested or is malformed."""


class ModelFileError(GnmError, ValueError):
    """A serialized model file is invalid, truncated or corrupt."""


class ConfigError(GnmError, ValueError):
    """A run-configuration file contains an unknown or malformed entry."""
