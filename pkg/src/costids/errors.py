"""Exception types shared across the package.

Each family maps onto one CLI exit code (see :mod:`costids.cli`).
"""


class CostIdsError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(CostIdsError, ValueError):
    """Bad configuration, bad arguments, or inconsistent shapes."""

    exit_code = 1


class DataError(CostIdsError, ValueError):
    """Malformed input data (unparseable lines, unknown labels, ...)."""

    exit_code = 2


class NumericError(CostIdsError, ArithmeticError):
    """A numeric procedure diverged or hit a degenerate state."""

    exit_code = 3
