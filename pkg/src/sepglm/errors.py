"""Exception hierarchy shared by all modules.

The CLI maps each family onto an exit code: configuration problems exit
with 2, malformed or inconsistent data with 3, numerical breakdowns with 4.
"""


class SepGLMError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(SepGLMError, ValueError):
    """Invalid run configuration or strategy parameters."""


class DataError(SepGLMError, ValueError):
    """Input data violates a documented precondition."""


class NumericalError(SepGLMError, ArithmeticError):
    """A computation left the region where it is numerically meaningful."""
