"""Exception hierarchy shared across the package."""
from __future__ import annotations


class FieldbookError(Exception):
    """Base class for all fieldbook errors."""


class ValidationError(FieldbookError):
    """Input rejected before any state was changed.

    ``field`` names the offending input field when one can be singled out,
    so callers (CLI, HTTP service) can point at it.
    """

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class TypeMismatchError(ValidationError):
    """A cell value does not parse as the column's declared type."""

    def __init__(self, column: str, expected: str, got: object):
        super().__init__(
            f"column {column!r} expects {expected}, got {got!r}", field=column
        )
        self.column = column
        self.expected = expected
        self.got = got


class NotFoundError(FieldbookError):
    """A referenced table, row, column or item does not exist."""

    def __init__(self, kind: str, what: str):
        super().__init__(f"{kind} not found: {what}")
        self.kind = kind
        self.what = what


class ChunkingError(ValidationError):
    """Text cannot be split for a length-limited sink."""


class StorageError(FieldbookError):
    """Durable storage failed; message includes the target path."""


class DocumentFormatError(StorageError):
    """A stored table file is malformed or violates a model invariant."""
