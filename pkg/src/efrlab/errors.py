"""Exception hierarchy shared by all efrlab modules."""


class EfrError(Exception):
    """Base class for every error raised by efrlab."""


class InvalidSpecError(EfrError, ValueError):
    """A geometry, grid or configuration object violates its invariants."""


class IncompatibleGridsError(EfrError, ValueError):
    """Two grids cannot be related by restriction."""


class DomainError(EfrError, ValueError):
    """A scalar argument lies outside its admissible range."""


class DegenerateReferenceError(EfrError, ValueError):
    """A relative quantity was requested against a reference of zero norm."""


class SolverError(EfrError, RuntimeError):
    """An iterative linear solve did not reach its tolerance.

    Attributes
    ----------
    residual : float
        Relative residual at termination.
    """

    def __init__(self, message, residual=float("nan")):
        super().__init__(f"{message} (relative residual {residual:.3e})")
        self.residual = residual


class BlowUpError(EfrError, FloatingPointError):
    """The discrete solution became non-finite or exceeded the blow-up threshold."""

    def __init__(self, time, message="solution blew up"):
        super().__init__(f"{message} at t={time:.6g}")
        self.time = time


class ConfigError(EfrError, ValueError):
    """Parse or validation failure in a run configuration file."""

    def __init__(self, message, line=None, path=None):
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}: "
        elif where:
            where += " "
        super().__init__(where + message)
        self.line = line
        self.path = path
