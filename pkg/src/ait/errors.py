"""Exception hierarchy shared by every module of the package."""


class AITError(ValueError):
    """Base class for all errors raised by ``ait``."""


class ZeroColumn(AITError):
    def __init__(self, j):
        super().__init__(f"column {j} has (numerically) zero l2 norm")
        self.j = j


class NotUnderdetermined(AITError):
    pass


class InvalidShape(AITError):
    pass


class EmptySupport(AITError):
    pass


class ZeroOnSupport(AITError):
    pass


class NonpositiveThreshold(AITError):
    pass


class NonFinite(AITError):
    pass


class DimensionMismatch(AITError):
    pass


class InvalidK(AITError):
    pass


class HypothesisViolated(AITError):
    """Raised when a bound is requested outside the region where it is valid.

    ``failed`` names the inequality that does not hold.
    """

    def __init__(self, failed):
        super().__init__(f"HypothesisViolated: {failed}")
        self.failed = failed


class LogDomain(AITError):
    pass


class IncompleteTrace(AITError):
    pass


class TooLarge(AITError):
    pass


class NoSolution(AITError):
    pass


class SingularRefit(AITError):
    pass
