"""Exception types shared by the solvers and the command line runner."""


class MFGError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(MFGError, ValueError):
    """Flows or vectors that must share an index set do not."""


class StructuralAssumptionViolation(MFGError):
    """A monotonicity, attainment or submodularity requirement failed.

    ``step`` is the iteration (or sample index) at which the failure was
    detected, when there is one.
    """

    def __init__(self, message: str, step: int | None = None, invariant: str | None = None):
        super().__init__(message)
        self.step = step
        self.invariant = invariant


class ResourceError(MFGError):
    """An enumeration would exceed its configured budget."""


class ConfigError(MFGError):
    """A run configuration is malformed or inconsistent."""
