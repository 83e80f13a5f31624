"""Exception hierarchy shared by all pipeline stages.

Exit-code mapping used by the CLI: InvalidInputError (and subclasses)
exit with 2, NumericError (and subclasses) with 3.
"""

from __future__ import annotations


class CxrPipeError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(CxrPipeError):
    """Caller passed data that violates an operation's preconditions."""


class FormatError(InvalidInputError):
    """A serialized container is malformed.

    ``reason`` is a short machine-checkable tag: one of ``"magic"``,
    ``"dtype"``, ``"truncated"``, ``"trailing"``, ``"non-finite"``.
    """

    def __init__(self, reason: str, message: str):
        super().__init__(message)
        self.reason = reason


class NumericError(CxrPipeError):
    """A numeric routine failed (factorization, convergence)."""


class ConvergenceError(NumericError):
    """Iterative solver ran out of its iteration budget.

    Carries the best iterate produced so far (``model``) and the
    remaining optimality ``residual`` so callers can inspect or salvage
    the partial result.
    """

    def __init__(self, message: str, model=None, residual: float | None = None):
        super().__init__(message)
        self.model = model
        self.residual = residual


class StageError(CxrPipeError):
    """An experiment stage failed; ``stage`` names the failing step."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
