"""Exception types shared across the toolkit."""

from __future__ import annotations


class WcrError(Exception):
    """Base class for all toolkit errors."""


class DataError(WcrError):
    """Input data violates a contract (bad values, missing counters, bad shapes)."""


class ParseError(DataError):
    """A text input could not be parsed.

    Carries the 1-based line number when the failure is tied to a line.
    """

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
