"""Exception hierarchy shared by all modules.

Each class carries the process exit status the command line uses for it.
"""


class TruncFLRError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class DimensionError(TruncFLRError, ValueError):
    exit_code = 4


class DomainError(TruncFLRError, ValueError):
    exit_code = 5


class InsufficientDataError(TruncFLRError, ValueError):
    exit_code = 6


class IllConditionedError(TruncFLRError, ArithmeticError):
    exit_code = 7


class InfeasibleMError(TruncFLRError, ValueError):
    """Requested number of components is not supported on the domain.

    ``max_feasible`` carries the largest m that would have worked (0 if none).
    """

    exit_code = 8

    def __init__(self, message, max_feasible=0):
        super().__init__(message)
        self.max_feasible = max_feasible


class NumericalError(TruncFLRError, ArithmeticError):
    exit_code = 9


class ParseError(TruncFLRError, ValueError):
    exit_code = 3

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc = f"{path}"
            if line is not None:
                loc += f":{line}"
            loc += ": "
        super().__init__(loc + message)
        self.path = path
        self.line = line
