"""Exception hierarchy.

``SpecificationError`` covers bad user input (CLI exit code 2); everything
else derived from ``NumericalError`` signals a failure of the numerics
(CLI exit code 1).
"""


class FluxnetError(Exception):
    """Base class for all package errors."""


class SpecificationError(FluxnetError):
    """Invalid network description or invalid arguments."""


class NumericalError(FluxnetError):
    """A numerical routine failed to produce a trustworthy result."""


class StabilityError(NumericalError):
    """The drift matrix is not Hurwitz stable."""


class RiccatiError(NumericalError):
    """Riccati solve failed (axis eigenvalues, graph condition, residual)."""


class DomainError(NumericalError):
    """Tilt lies outside the essential domain (or its closure)."""


class QuadratureError(NumericalError):
    """Adaptive quadrature could not reach the requested tolerance."""


class ConvergenceError(NumericalError):
    """Iterative procedure exhausted its budget without converging."""
