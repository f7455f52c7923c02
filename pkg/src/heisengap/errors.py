"""Exception types shared across the package."""


class HeisengapError(Exception):
    """Base class for all package-specific errors."""


class EmptyDomain(HeisengapError):
    """Rasterization produced no (or too few) interior nodes."""


class DisconnectedDomain(HeisengapError):
    """Interior nodes do not form a single connected component."""


class LengthMismatch(HeisengapError):
    """Parallel block lists have different lengths."""


class IndexOutOfRange(HeisengapError):
    """Laguerre index outside the supported range."""


class FieldRangeError(HeisengapError):
    """Field strength outside the supported B * diam(domain)^2 range."""


class BudgetExceeded(HeisengapError):
    """Quadrature refinement exceeded the node budget."""


class NotEnoughTrials(HeisengapError):
    """Too few non-positive deficit samples for the requested selection."""


class TopologyMismatch(HeisengapError):
    """Operation requires a t-periodic cylinder."""


class NoConvergence(HeisengapError):
    """Eigensolver hit the iteration cap. Carries partial results."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class DimensionTooSmall(HeisengapError):
    """Requested eigenpair count incompatible with the operator size."""


class ZeroVector(HeisengapError):
    """Rayleigh quotient of the zero vector is undefined."""


class SigmaMeanPositive(HeisengapError):
    """Robin density with positive boundary average; outside the verified regime."""


class DefectTooLarge(HeisengapError):
    """Cross-term defect failed to shrink under mesh refinement."""
