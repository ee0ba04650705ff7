"""Exception types shared across the package."""


class LQRGradError(Exception):
    """Base class for all package-specific errors."""


class DimensionError(LQRGradError, ValueError):
    """Matrix arguments have incompatible or invalid shapes."""


class NotSchurStable(LQRGradError):
    """A gain (or system matrix) fails the spectral-radius < 1 test.

    Callers that need an extended-value cost should treat this as f = +inf;
    no infinite arithmetic is ever performed internally.
    """


class DegenerateQ(LQRGradError):
    """The state cost Q has a zero smallest eigenvalue where a stepsize or
    bound formula divides by it."""


class NoConvergence(LQRGradError):
    """An iteration hit its cap without meeting its convergence test."""


class StepUnderflow(LQRGradError):
    """The flow integrator's stepsize fell below the configured minimum."""


class InternalStabilityLoss(LQRGradError):
    """A descent iterate left the stabilizing set.

    The stepsize theory forbids this, so it signals a bug or a violated
    assumption rather than an expected runtime condition.
    """


class PatternViolation(LQRGradError):
    """A gain carries mass on entries outside its sparsity pattern."""


class InsufficientData(LQRGradError):
    """Not enough usable records to fit a convergence rate."""
