"""Exception hierarchy shared across the package.

Two branches matter for the CLI exit code: ``InputError`` (bad files,
bad config, schema violations -> exit 1) and ``ComputationError``
(degenerate samples, non-convergence -> exit 2).
"""

from __future__ import annotations


class GridmobError(Exception):
    """Base class for all package errors."""


class InputError(GridmobError):
    """Invalid input data, schema, or configuration."""


class ComputationError(GridmobError):
    """A computation could not produce a valid result."""


class SchemaError(InputError):
    """CSV header or field types do not match the expected schema."""


class RowError(InputError):
    """A specific data row is invalid; carries the 1-based file row number."""

    def __init__(self, row: int, field: str, message: str) -> None:
        super().__init__(f"row {row}, field '{field}': {message}")
        self.row = row
        self.field = field


class DuplicateKeyError(InputError):
    """A (uid, day, slot) key appears more than once under the reject policy."""


class ConfigError(InputError):
    """Run configuration failed validation; names the offending key."""

    def __init__(self, key: str, message: str) -> None:
        super().__init__(f"config key '{key}': {message}")
        self.key = key


class DegenerateSampleError(ComputationError):
    """Sample cannot support the requested estimate (too small, zero variance)."""


class FitError(ComputationError):
    """Distribution fitting failed."""
