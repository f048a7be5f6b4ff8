"""Exception hierarchy shared across the package."""


class SigweaveError(Exception):
    """Base class for all domain errors raised by sigweave."""


class SchemaError(SigweaveError):
    """Attribute schema or scenario is malformed or inconsistent."""


class StratificationError(SigweaveError):
    """A per-scenario stratum is too small for the requested operation."""


class DataFormatError(SigweaveError):
    """A dataset directory, manifest or signal file is malformed."""


class InfeasibilityError(SigweaveError):
    """The requested selection or synthesis has no valid donors."""


class PairingError(SigweaveError):
    """Samples handed to a paired loss do not satisfy its relationship."""


class ShapeError(SigweaveError):
    """Array dimensions do not match the model or dataset configuration."""


class CheckpointError(SigweaveError):
    """A checkpoint directory is missing, truncated or inconsistent."""


class SchedulingError(SigweaveError):
    """The quad scheduler was given nothing to schedule."""


class NumericError(SigweaveError):
    """A numeric quantity (gradient, loss component) is non-finite."""


class DivergenceError(NumericError):
    """Training produced a non-finite or exploding loss."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step
