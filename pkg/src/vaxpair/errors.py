"""Exception classes shared across the package."""


class VaxpairError(Exception):
    """Base class for all package errors."""


class InputError(VaxpairError, ValueError):
    """An argument is outside the domain of an operation."""


class NumericError(VaxpairError, ArithmeticError):
    """A quadrature or root-finding step failed to converge."""


class UndefinedEstimandError(VaxpairError):
    """An estimand has an empty conditioning set or a vanishing denominator."""


class InsufficientDataError(VaxpairError):
    """A stratum or smoothing window holds too few records.

    ``stratum`` names the offending cell so callers can report it.
    """

    def __init__(self, message, stratum=None):
        super().__init__(message)
        self.stratum = stratum


class ConfigError(VaxpairError):
    """A configuration file failed to parse or validate.

    ``line`` is the 1-based line number when it can be located.
    """

    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)
        self.path = path
        self.line = line
