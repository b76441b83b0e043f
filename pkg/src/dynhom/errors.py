"""Exception types shared across the package.

The CLI maps these onto exit codes: configuration problems exit 2, data and
I/O problems exit 3, numeric failures exit 4.
"""


class DynhomError(Exception):
    """Base class for all package errors."""


# --- numeric failures (exit code 4) ---

class PointAtInfinity(DynhomError):
    """A projective point mapped to (or from) the line at infinity."""


class SingularMatrix(DynhomError):
    """A homography with |det| below tolerance cannot be inverted."""


class DegenerateCorners(DynhomError):
    """The four corner correspondences do not determine a homography."""


class ShapeMismatch(DynhomError):
    """Tensor or raster shapes are inconsistent for the requested op."""


class InsufficientCorrespondences(DynhomError):
    """Fewer than four usable correspondences for a homography fit."""


# --- data errors (exit code 3) ---

class ImageTooSmall(DynhomError):
    """Raster below the minimum size for the requested operation."""


class OutOfBounds(DynhomError):
    """A crop or sample region leaves the raster."""


class SizeMismatch(DynhomError):
    """Two rasters that must share dimensions do not."""


class DatasetEmpty(DynhomError):
    """An operation requiring samples received none."""


class DataIoError(DynhomError):
    """Reading or writing dataset/checkpoint files failed."""


# --- configuration errors (exit code 2) ---

class ConfigInvalid(DynhomError):
    """A configuration value violates its documented constraints."""
