"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
NumericError -> 4.
"""


class ShapeError(ValueError):
    """Operands have incompatible shapes for the requested operation."""


class NumericError(RuntimeError):
    """A numeric invariant was violated (NaN input, NaN loss/gradient)."""


class DataError(RuntimeError):
    """Corpus, index, or checkpoint content is malformed or inconsistent."""


class ConfigError(ValueError):
    """Invalid or conflicting run configuration."""
