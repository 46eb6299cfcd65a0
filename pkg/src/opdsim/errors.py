"""Shared exception types."""


class ValidationError(ValueError):
    """Raised when an input file, config or dataset violates the schema or an
    invariant (CLI maps this to exit code 3)."""
