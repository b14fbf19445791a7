"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
DivergenceError -> 4.
"""


class ConfigError(ValueError):
    """Invalid configuration or model-variant combination."""


class DataError(ValueError):
    """Unusable input data (missing values, too short, bad CSV)."""


class ShapeError(ValueError):
    """Tensor shapes incompatible for the requested operation."""


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch, message=None):
        self.epoch = epoch
        super().__init__(message or f"non-finite loss at epoch {epoch}")
