"""Exception hierarchy shared by every module."""


class AfpoError(Exception):
    """Base class for computation errors raised by this package."""


class InputError(AfpoError, ValueError):
    """Rejected input: out-of-domain value, malformed file or config."""


class DomainError(InputError):
    """A function was evaluated outside its domain."""


class CapacityError(AfpoError):
    """The pool's total tax capacity cannot absorb the largest residual loss."""


class InfeasibleParameters(AfpoError):
    """No closed-form case of the two-region problem matches the parameters."""


class StageError(AfpoError):
    """A pipeline stage failed; carries the stage name and the original error."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause
