"""Exception types raised by the kernel."""
from __future__ import annotations


class UnrollError(Exception):
    """Base class for every error raised by this package."""


class CornerPoint(UnrollError):
    """A frame was requested exactly at a corner without choosing a side."""


class TangentRay(UnrollError):
    """A ray leaves the boundary tangentially instead of entering the region."""


class NoExit(UnrollError):
    """The ray exit search found no boundary crossing."""


class ZeroNormalDerivative(UnrollError):
    """The surface normal is stationary, so no ruling direction exists."""


class LimitDivergence(UnrollError):
    """One-sided extrapolation of ruling data did not settle."""


class SingularRuling(UnrollError):
    """The ruled parameterization loses regularity at the requested point."""


class DivergentEnergy(UnrollError):
    """Adaptive quadrature of the energy density failed to converge."""


class GapMismatch(UnrollError):
    """A rigid planar piece does not reproduce the boundary data of its loop."""


class NonPlanarGap(UnrollError):
    """The surface normal varies along the boundary loop of a planar piece."""


class LocationFailure(UnrollError):
    """A point of the region could not be assigned to any piece of the immersion."""


class UndefinedOnCorneredRuling(UnrollError):
    """The normal gradient was requested on a ruling whose feet are all corners or tangencies."""


class GeneratorFailure(UnrollError):
    """A curve family could not produce a usable framed curve."""


class SchemaError(UnrollError):
    """Configuration input failed validation.

    ``pointer`` holds the JSON-pointer location of the offending value.
    """

    def __init__(self, message: str, pointer: str = ""):
        super().__init__(f"{pointer or '/'}: {message}")
        self.pointer = pointer or "/"
        self.detail = message
