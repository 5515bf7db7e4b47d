"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: usage/parse problems exit with 2,
numerical failures with 3.
"""


class BVLabError(Exception):
    """Base class for all library errors."""


class UsageError(BVLabError):
    """The caller violated an API contract (bad arguments, missing tags,
    mismatched generator bindings)."""


class DomainError(UsageError):
    """A point lies outside the generator's declared domain."""


class ParseError(UsageError):
    """A file could not be parsed; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class SchemaError(UsageError):
    """A file parsed but its header/body are inconsistent."""


class NumericalError(BVLabError):
    """A computation produced a non-finite intermediate or diverged."""
