"""Exception types shared across the suite.

The CLI maps :class:`ConfigError` to exit code 1 and :class:`NumericalError`
to exit code 2.
"""


class ConfigError(ValueError):
    """Invalid configuration, hyperparameter, or degenerate setup."""


class NumericalError(ArithmeticError):
    """A loss, gradient, or reward became non-finite."""


class DatasetFormatError(ValueError):
    """An ILDS1 file is malformed, truncated, or inconsistent."""
