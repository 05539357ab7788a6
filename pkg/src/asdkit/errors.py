"""Shared exception types."""


class AsdError(Exception):
    """Base class for all toolkit errors."""


class ParseError(AsdError):
    """Malformed input text. Carries the 1-based line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(AsdError):
    """Structurally well-formed input violating a domain invariant."""
