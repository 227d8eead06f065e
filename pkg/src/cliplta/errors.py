"""Exception types shared across the package.

Two categories, mirroring the CLI exit codes: bad inputs (schemas,
preconditions, lookups) and numeric/runtime failures.
"""


class ValidationError(ValueError):
    """Input violates a schema, precondition, or lookup contract. CLI exit 2."""


class NumericError(RuntimeError):
    """Numeric failure at runtime (non-finite loss, corrupt blob). CLI exit 3."""
