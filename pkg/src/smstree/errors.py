"""Exception hierarchy shared by the library and the command line.

Each class carries the process exit code the CLI reports for it.
"""


class SMSError(Exception):
    """Base class for every error raised by :mod:`smstree`."""

    exit_code = 1


class ConfigError(SMSError, ValueError):
    exit_code = 2


class ParameterDomainError(ConfigError):
    """A copula parameter lies outside its family's support."""


class SelectionError(ConfigError):
    """No characteristic curve covers the requested Spearman's rho."""


class DataError(SMSError, ValueError):
    exit_code = 3


class FormatError(DataError):
    """A model, curve or CSV file is malformed."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class SchemaError(ConfigError):
    """Data columns do not match the variables a model was built for."""

    exit_code = 4


class NumericalError(SMSError, ArithmeticError):
    exit_code = 5


class RangeError(ConfigError):
    """A Spearman's rho value is not attainable by a copula family."""
