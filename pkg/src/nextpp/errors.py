"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: contract/validation problems exit 2,
numeric and sampling failures exit 3 (usage errors exit 1).
"""


class NextppError(Exception):
    """Base class for all package errors."""


class ShapeError(NextppError, ValueError):
    """Tensor dimensions do not line up."""


class ContractError(NextppError, ValueError):
    """A documented precondition was violated by the caller."""


class ValidationError(NextppError, ValueError):
    """Input data failed validation (carries file/line context where known)."""


class ParseError(NextppError, ValueError):
    """A file could not be parsed."""


class CheckpointError(NextppError, ValueError):
    """Checkpoint is corrupt, from an incompatible version, or mismatched."""


class NumericError(NextppError, ArithmeticError):
    """A non-finite value appeared during computation."""


class SamplingError(NextppError, RuntimeError):
    """Thinning exceeded its rejection budget."""


class PredictionError(NextppError, RuntimeError):
    """Next-event prediction found no probability mass in the horizon."""


class TrainingDivergedError(NumericError):
    """Training loss went non-finite; carries the last good checkpoint path."""

    def __init__(self, message, last_checkpoint=None):
        super().__init__(message)
        self.last_checkpoint = last_checkpoint
