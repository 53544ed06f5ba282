"""Exception types shared across the package.

The CLI maps each class onto a process exit code, so keep the hierarchy flat.
"""


class RowFiniteError(Exception):
    """Base class for all package errors."""


class ResourceLimitError(RowFiniteError):
    """A generator or solver would exceed a configured size guard."""


class SolverError(RowFiniteError):
    """Time stepping or series summation could not complete."""


class ConfigError(RowFiniteError, ValueError):
    """A run configuration or operation argument is invalid."""
