"""Exception types raised across the package."""


class SapflowError(Exception):
    """Base class for all package errors."""


class MeshParseError(SapflowError):
    """A mesh file could not be parsed in its declared format."""


class MeshTopologyError(SapflowError):
    """Mesh connectivity is not a closed oriented manifold."""


class OrientationError(SapflowError):
    """Consistent but inward orientation (negative enclosed volume)."""


class DegenerateGeometryError(SapflowError):
    """Zero-area face, zero-length normal or rank-deficient local fit."""


class DegenerateMeanCurvatureError(SapflowError):
    """Integral of H^2 numerically zero; the nonlocal coefficient is undefined."""


class BlowUpError(SapflowError):
    """Flow terminated on a blow-up guard (used internally by stepping)."""

    def __init__(self, kind, message=""):
        super().__init__(message or kind)
        self.kind = kind


class NonPositiveSamplesError(SapflowError):
    """Log-linear fit requested on data that is not strictly positive."""


class WindowTooSmallError(SapflowError):
    """Fewer than the minimum number of samples in the fit window."""


class DegenerateFitError(SapflowError):
    """Sphere fit on degenerate (e.g. coplanar) point data."""
