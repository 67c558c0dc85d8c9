"""Exception types shared across the package."""


class VanishDampError(Exception):
    """Base class for all package-specific errors."""


class DomainError(VanishDampError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class UnsupportedError(VanishDampError, ValueError):
    """The requested operation is not defined for this object."""


class ConfigError(VanishDampError, ValueError):
    """A config file is malformed or semantically invalid.

    ``line`` is the 1-based line number in the source file when it could be
    located, else None.
    """

    def __init__(self, message, path=None, line=None):
        super().__init__(message)
        self.message = message
        self.path = path
        self.line = line

    def __str__(self):
        loc = ""
        if self.path is not None:
            loc = str(self.path)
            if self.line is not None:
                loc += f":{self.line}"
            loc += ": "
        return loc + self.message


class HypothesisError(VanishDampError, ValueError):
    """A theorem's standing hypothesis fails on the supplied data, so the
    corresponding bound check would be meaningless."""


class SolverError(VanishDampError, RuntimeError):
    """Base class for integration failures."""


class MaxStepsExceeded(SolverError):
    """The step budget ran out before reaching t_end."""


class StepUnderflow(SolverError):
    """Error control pushed the step size below the resolvable floor."""


class NonFiniteState(SolverError):
    """The state vector left the floating-point range (NaN or inf)."""
