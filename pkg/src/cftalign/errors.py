"""Error taxonomy shared by the library and the CLI exit codes."""


class UsageError(ValueError):
    """An API or CLI surface was called incorrectly."""

    exit_code = 2


class ConfigurationError(ValueError):
    """Inconsistent configuration: bad shapes, bad fields, bad files."""

    exit_code = 3


class DataError(ValueError):
    """A sample or dataset violates its invariants."""

    exit_code = 4


class NumericError(ArithmeticError):
    """NaN/Inf appeared where finite values are required."""

    exit_code = 5
