"""Exception types shared across the package."""


class TvggmError(Exception):
    """Base class for all package-specific errors."""


class DataError(TvggmError):
    """Invalid input data (non-finite values, bad shapes, bad domains)."""


class DegenerateColumnError(DataError):
    """A variable has zero variance (or zero smoothed variance)."""

    def __init__(self, column, message=None):
        self.column = column
        super().__init__(message or f"degenerate variable: {column!r}")


class EmptyWindowError(TvggmError):
    """No kernel mass at the requested time."""

    def __init__(self, t, bandwidth):
        self.t = t
        self.bandwidth = bandwidth
        super().__init__(
            f"no kernel mass at t={t:g} with bandwidth h={bandwidth:g}"
        )


class ParameterError(TvggmError):
    """Invalid tuning or solver parameter."""


class ConvergenceError(TvggmError):
    """Iterative solver hit its iteration cap before meeting tolerances."""

    def __init__(self, message, primal_residual=None, dual_residual=None):
        self.primal_residual = primal_residual
        self.dual_residual = dual_residual
        super().__init__(message)


class GenerationError(TvggmError):
    """A simulated precision matrix failed the positive-definiteness check."""
