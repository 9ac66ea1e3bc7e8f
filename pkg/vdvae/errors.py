"""Exception hierarchy shared by every sub-package."""


class VDVAEError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(VDVAEError, ValueError):
    """Operands have incompatible shapes."""


class BlockSpecError(VDVAEError, ValueError):
    """A block-spec string is malformed or violates the ladder invariants."""


class ConfigError(VDVAEError, ValueError):
    """A model, training or run configuration is invalid."""


class DatasetError(VDVAEError, ValueError):
    """Dataset files are missing, truncated or degenerate."""


class CheckpointError(VDVAEError, ValueError):
    """A checkpoint file cannot be decoded."""


class MissingGradientError(VDVAEError):
    """A parameter has no gradient where one is required."""


class NonFiniteError(VDVAEError, FloatingPointError):
    """A NaN or infinity appeared where only finite values are allowed."""


class TrainingDivergedError(VDVAEError):
    """A step whose update would be applied produced a non-finite loss."""

    def __init__(self, step: int, message: str):
        super().__init__(f"step {step}: {message}")
        self.step = step
