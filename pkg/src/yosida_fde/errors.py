"""Exception hierarchy shared by the solver modules."""


class YosidaError(Exception):
    """Base class for all package errors."""


class StructuralError(YosidaError, ValueError):
    """Malformed input data: empty segments, grid mismatches, bad shapes."""


class GridRangeError(YosidaError, ValueError):
    """A time lies outside the grid or is not aligned with it."""


class DomainError(YosidaError, ValueError):
    """A parameter violates a domain restriction (e.g. lambda*omega >= 1)."""


class ResolventError(YosidaError, RuntimeError):
    """Iterative resolvent solve did not reach its tolerance."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class StageError(YosidaError, RuntimeError):
    """Failure inside the scheme, tagged with the stage that raised it."""

    def __init__(self, message, stage, cause=None):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.cause = cause


class ConvergenceError(YosidaError, RuntimeError):
    """The double limit could not be certified; carries the full report."""

    def __init__(self, message, report=None, trajectory=None):
        super().__init__(message)
        self.report = report
        self.trajectory = trajectory


class StabilityMarginError(DomainError):
    """Half-line run requested without a strict stability margin."""


class ConfigError(YosidaError, ValueError):
    """Invalid run configuration."""


class ConditioningError(DomainError):
    """A least-squares fit is too ill-conditioned to report coefficients."""
