"""Error types raised by iohlqg."""

from typing import Optional


class IohLqgError(Exception):
    """Base class for every domain or solver failure."""


class RejectedInputError(IohLqgError, ValueError):
    """Dimension mismatch, non-finite data or an invalid configuration value."""


class InstabilityError(IohLqgError):
    """A spectral-radius gate failed."""

    def __init__(self, message: str, rho: Optional[float] = None):
        super().__init__(message)
        self.rho = rho


class UnboundedCostError(InstabilityError):
    """Cost or gradient requested for a gain outside the stabilizing set."""


class SolverFailureError(IohLqgError):
    """A Lyapunov/Riccati solve did not meet its residual gate or did not converge."""


class NotObservableError(IohLqgError):
    """The plant is not L-step observable (or violates observability outright)."""


class NotLiftableError(IohLqgError):
    """A dynamic controller has no IOH gain of the requested length."""


class StepDestabilizedError(IohLqgError):
    """A gradient step left the stabilizing set and backoff was exhausted."""

    def __init__(self, message: str, rho: float, alpha: float):
        super().__init__(message)
        self.rho = rho
        self.alpha = alpha


class NoStabilizerFoundError(IohLqgError):
    """Rejection sampling found no stabilizing gain within its budget."""


class DivergingRolloutError(IohLqgError):
    """A Monte-Carlo rollout exceeded the state-norm guard."""


class InternalInvariantError(IohLqgError):
    """An identity that holds by construction was violated numerically."""
