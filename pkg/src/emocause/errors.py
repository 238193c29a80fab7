"""Exception types shared across the package."""

from __future__ import annotations


class EmocauseError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(EmocauseError):
    """Invalid scoring or pipeline configuration."""


class SchemaError(EmocauseError):
    """A document violates the expected schema at a specific field path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message


class DialogueParseError(EmocauseError):
    """Input bytes are not well-formed JSON."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        loc = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"{message}{loc}")
        self.line = line
        self.column = column


class InvalidDialogueError(EmocauseError):
    """A parsed dialogue failed invariant validation."""

    def __init__(self, errors: list[str]):
        super().__init__("dialogue failed validation: " + "; ".join(errors))
        self.errors = errors


class StrictModeError(EmocauseError):
    """Strict ingestion rejected a dialogue that only carried warnings."""

    def __init__(self, warnings: list[str]):
        super().__init__("strict mode rejected dialogue with warnings: " + "; ".join(warnings))
        self.warnings = warnings


class EmbeddingError(EmocauseError):
    """An embedding provider failed or returned an unusable vector."""


class FusionError(EmocauseError):
    """Multimodal fusion inputs are inconsistent."""


class TransportError(EmocauseError):
    """A remote provider call failed at the transport level (retryable)."""

    def __init__(self, message: str, retryable: bool = True):
        super().__init__(message)
        self.retryable = retryable


class ResponseParseError(EmocauseError):
    """A provider response could not be parsed; carries the raw text."""

    def __init__(self, message: str, raw: str = ""):
        super().__init__(message)
        self.raw = raw


class StoreFormatError(EmocauseError):
    """A persisted knowledge-base file is corrupt or version-incompatible."""


class PrecedenceError(EmocauseError):
    """A temporal score was requested for an effect that precedes its cause."""
