"""Exception hierarchy."""


class SteklovError(Exception):
    """Base class for all library errors."""


class GeometryError(SteklovError, ValueError):
    """Degenerate element or edge (zero area / zero length)."""


class StructuralError(SteklovError, ValueError):
    """Mesh topology is not what an operation requires (non-conforming, not nested...)."""


class UnsupportedDomainError(SteklovError, ValueError):
    """The built-in mesher cannot triangulate the requested polygon."""


class NotSPDError(SteklovError, ArithmeticError):
    """A non-positive pivot showed up while factoring a matrix assumed SPD."""


class ShiftSingularError(SteklovError, ArithmeticError):
    """``K - sigma*M`` stayed singular after the perturbation retries."""

    def __init__(self, message, shifts=()):
        super().__init__(message)
        self.shifts = tuple(shifts)


class DegenerateStartError(SteklovError, ArithmeticError):
    """The start vector produced a zero iterate (e.g. it vanishes on the boundary)."""


class BoundaryNullError(SteklovError, ArithmeticError):
    """``b(u, u) = 0``: the Rayleigh quotient is undefined."""


class EigensolverStagnationError(SteklovError, RuntimeError):
    """Krylov eigensolver did not reach the residual tolerance within its restart budget."""
