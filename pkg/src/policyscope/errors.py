"""Exception hierarchy shared by all policyscope modules.

Every exception carries a stable machine ``code`` string; the HTTP layer maps
codes to status codes one-to-one, so raising the right exception type anywhere
in the library produces the right wire error.
"""

from __future__ import annotations


class PolicyScopeError(Exception):
    """Base class; ``code`` is a stable machine-readable identifier."""

    code = "internal"

    def __init__(self, message: str, detail: dict | None = None):
        super().__init__(message)
        self.message = message
        self.detail = detail or {}


class ModelInvalidError(PolicyScopeError):
    """A model failed validation; ``detail['issues']`` lists the violations."""

    code = "invalid"


class ConfigError(PolicyScopeError):
    """A scenario or training config field is out of its documented range."""

    code = "config"


class IncompatibilityError(PolicyScopeError):
    """Two artifacts (model/policy/trace) disagree on their spaces."""

    code = "incompatible"


class RangeError(PolicyScopeError):
    """An index, action id, or cursor offset is out of range."""

    code = "range"


class TerminalStateError(PolicyScopeError):
    """The environment cannot step from a terminal state."""

    code = "terminal"


class ImpossibleObservationError(PolicyScopeError):
    """Belief update normalizer was zero: the observation has probability 0
    under the predicted belief.  ``unnormalized`` carries the raw vector."""

    code = "impossible_observation"

    def __init__(self, message: str, unnormalized):
        super().__init__(message, {"unnormalized": [float(x) for x in unnormalized]})
        self.unnormalized = unnormalized


class NotFoundError(PolicyScopeError):
    code = "not_found"


class ConflictError(PolicyScopeError):
    code = "conflict"


class FinishedError(PolicyScopeError):
    """A stepping command was issued to a finished session."""

    code = "finished"


class PreconditionError(PolicyScopeError):
    """A session command was issued in a status/mode that does not allow it."""

    code = "precondition"


class IngestError(PolicyScopeError):
    """A trace stream violates the interchange format; ``line`` is 1-based."""

    code = "ingest"

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message, {"line": line} if line is not None else {})
        self.line = line


class LoadError(PolicyScopeError):
    """A serialized policy payload cannot be decoded."""

    code = "load"


class NumericError(PolicyScopeError):
    """A non-finite value appeared where a finite number was required."""

    code = "numeric"


class TrainingDivergedError(PolicyScopeError):
    """Training produced non-finite parameters.  ``checkpoint`` holds the last
    good parameter snapshot."""

    code = "training_diverged"

    def __init__(self, message: str, checkpoint=None):
        super().__init__(message)
        self.checkpoint = checkpoint
