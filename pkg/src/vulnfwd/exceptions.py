"""Exception hierarchy for the pricing engine."""


class VulnFwdError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(VulnFwdError, ValueError):
    """Structurally invalid input (bad sign, out-of-domain parameter, malformed config)."""


class NonLinearizingPolicy(VulnFwdError):
    """The funding policy does not linearize the pricing problem."""


class NotAtmrf(VulnFwdError):
    """The strike is not at the at-the-money risk-free level."""


class NumericalError(VulnFwdError):
    """Base class for numerical failures."""


class QuadratureNonConvergence(NumericalError):
    """Adaptive quadrature could not reach the requested tolerance."""


class DegenerateVariance(NumericalError):
    """A sample has zero variance, so a correlation is undefined."""


class GridTooCoarse(NumericalError):
    """The Richardson error estimate of a PDE solve exceeds the requested tolerance."""

    def __init__(self, message: str, estimate: float | None = None):
        super().__init__(message)
        self.estimate = estimate
