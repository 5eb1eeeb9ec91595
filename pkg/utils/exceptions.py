"""Exception hierarchy shared by the bank, selection, engine and CLI layers."""
from __future__ import annotations

from typing import Optional


class DoubleTakeError(Exception):
    """Base class for every error raised on purpose by this project."""


class ValidationError(DoubleTakeError, ValueError):
    """Input data or configuration violates a documented invariant."""

    def __init__(self, message: str, *, line: Optional[int] = None, source: Optional[str] = None) -> None:
        self.line = line
        self.source = source
        prefix = ""
        if source is not None:
            prefix = f"{source}:"
        if line is not None:
            prefix = f"{prefix}{line}: " if prefix else f"line {line}: "
        elif prefix:
            prefix = f"{prefix} "
        super().__init__(f"{prefix}{message}")


class TemplateError(ValidationError):
    """Prompt template uses an unknown placeholder or a binding is missing."""


class FixtureError(ValidationError):
    """Mock fixture has no entry for a requested id."""


class PoolExhaustedError(DoubleTakeError):
    """No candidate is left for a triad role."""


class EngineError(DoubleTakeError):
    """Transport-level failure reported by a comparison engine."""

    def __init__(self, message: str, *, status: Optional[int] = None) -> None:
        self.status = status
        super().__init__(message)


class ReplayError(DoubleTakeError):
    """A sweep replay needed a pairwise response that is not in the cache."""
