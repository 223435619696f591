"""Package-wide error taxonomy.

Keeping these distinct lets callers (and the CLI exit-code mapping) tell
usage problems apart from numeric failures.
"""


class ShapeError(ValueError):
    """Array dimensions do not match the declared interface."""


class StateError(RuntimeError):
    """Operation called before its required prior step (e.g. backward before forward)."""


class NumericError(ArithmeticError):
    """Non-finite or otherwise unusable numeric intermediate."""


class DomainError(ValueError):
    """Argument outside its mathematical domain."""


class DataError(ValueError):
    """Input data unusable (empty, too short, wrong layout)."""


class DegenerateDataError(DataError):
    """Data carries no spread (e.g. all samples identical)."""


class ConfigError(ValueError):
    """Inconsistent or unknown configuration."""
