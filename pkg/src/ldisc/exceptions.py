"""Exception hierarchy shared by all ldisc modules."""


class LDISCError(Exception):
    """Base class for every error raised by ldisc."""


class DatasetParseError(LDISCError):
    """A dataset or model file could not be parsed.

    ``line`` holds the 1-based line number when the failure is tied to a row.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DimensionError(LDISCError, ValueError):
    """Inputs disagree on matrix dimensions."""


class SingularityError(LDISCError, ArithmeticError):
    """Evaluation hit a pole, or a shifted pencil was singular."""


class DegenerateDataError(LDISCError):
    """The Loewner pencil carries no dynamics (e.g. constant data)."""


class IllPosedLoopError(LDISCError, ArithmeticError):
    """The return difference ``I + Phi K`` is singular at some frequency."""

    def __init__(self, omega):
        super().__init__(f"feedback loop ill-posed at omega={omega!r} rad/s")
        self.omega = omega


class PreconditionError(LDISCError, ValueError):
    """An operation was called on inputs violating its precondition."""


class GammaEstimationError(LDISCError):
    """The identified small-gain transfer is unstable or unusable."""


class InitializationError(LDISCError):
    """No stabilizing initial controller was found."""
