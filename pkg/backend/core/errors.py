class StgError(Exception):
    """Base class for every failure raised by the stochastic timed game toolkit."""


class ModelError(StgError, ValueError):
    """The model (or a file describing it) is malformed or inconsistent."""


class UnsupportedModelError(ModelError):
    """The model is valid but outside what the requested operation handles."""


class TcmSyntaxError(ModelError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(f"{prefix}{message}")


class IllegalMoveError(StgError, ValueError):
    """A delay/edge pair is not enabled from the state it was played in."""


class BlockedStateError(StgError, RuntimeError):
    """No edge can be taken from a non-target state."""


class SemanticsError(StgError, RuntimeError):
    """The run semantics is undefined for the requested step."""


class PreconditionError(StgError, ValueError):
    """An operation was called on an input violating its precondition."""


class IllegalOperationError(StgError, ValueError):
    pass


class DomainError(StgError, ValueError):
    """A closed-form law or perturbation was evaluated outside its domain."""


class InternalConsistencyError(StgError, RuntimeError):
    """An internal invariant failed; the offending data is carried in the message."""


class SeparationError(StgError, RuntimeError):
    """Interval refinement could not certify a sign within the term cap."""


class UsageError(StgError, ValueError):
    pass
