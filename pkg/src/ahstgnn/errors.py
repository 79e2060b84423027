"""Exception types shared across the package."""


class AhstgnnError(Exception):
    """Base class for package errors."""


class DimensionError(AhstgnnError, ValueError):
    """Tensor shapes are incompatible for the requested operation."""


class ContractError(AhstgnnError, ValueError):
    """A documented precondition was violated."""


class IngestionError(AhstgnnError, ValueError):
    """Input files are malformed (gaps, duplicates, NaN cells)."""


class WindowingError(AhstgnnError, ValueError):
    """The series is too short for the requested periodic windows."""


class ConfigError(AhstgnnError, ValueError):
    """Run configuration is invalid."""


class TrainingError(AhstgnnError, RuntimeError):
    """Training diverged; ``last_good`` holds the last finite parameters."""

    def __init__(self, message, last_good=None):
        super().__init__(message)
        self.last_good = last_good


class CheckpointError(AhstgnnError, ValueError):
    """A checkpoint file is truncated, corrupt, or does not fit the model."""
