"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Bad inputs or violated preconditions (CLI exit code 1)."""


class NumericalError(RuntimeError):
    """A computation failed to reach its accuracy target (CLI exit code 2)."""
