"""Exception types shared by the greenlab modules."""


class GreenLabError(Exception):
    """Base class for all greenlab errors."""


class InvalidParameters(GreenLabError, ValueError):
    pass


class GridTooCoarse(GreenLabError, ValueError):
    """Raised when h*|k| exceeds the sampling criterion."""


class SingularSystem(GreenLabError, ArithmeticError):
    """The discretized operator is numerically singular."""


class IntervalExhausted(GreenLabError, ValueError):
    """A shrink step would leave an interval of nonpositive length."""


class MeshTooCoarse(GreenLabError, ValueError):
    pass


class ConfigError(GreenLabError, ValueError):
    """Invalid run configuration; ``path`` names the offending field."""

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")


class FitUnderdetermined(GreenLabError, ValueError):
    """Too few usable points for a decay fit."""


class GateViolation(InvalidParameters):
    """A check's precondition on its inputs does not hold; the check is skipped."""
