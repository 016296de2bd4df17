"""Exception types raised across the package.

Every error carries a human-readable message naming the offending
entity (face index, line number, field) where one exists.
"""


class MeshTexError(Exception):
    """Base class for all errors raised by this package."""


# --- geometry ---------------------------------------------------------------

class ParseError(MeshTexError):
    """Malformed OBJ/MTL input."""


class MissingUVs(ParseError):
    """A face has no texture coordinates; the atlas cannot be addressed."""


class NonTriangulated(ParseError):
    """A face has more or fewer than three corners."""


class DegenerateMesh(MeshTexError):
    """Mesh has zero extent in all axes; it cannot be normalized."""


class ZeroCoverage(MeshTexError):
    """No texel center falls inside any UV triangle at this resolution."""


# --- raster / texture state -------------------------------------------------

class ResolutionMismatch(MeshTexError):
    """Two buffers that must share a resolution do not."""


class IndivisibleFactor(MeshTexError):
    """Mask resolution is not divisible by the downsampling factor."""


# --- diffusion --------------------------------------------------------------

class InvalidRange(MeshTexError):
    """A schedule or strength parameter is outside its legal range."""


class StepOutOfRange(MeshTexError):
    """A timestep index falls outside [0, T]."""


class ShapeMismatch(MeshTexError):
    """Latent, mask, or conditioning shapes disagree."""


# --- backend ----------------------------------------------------------------

class BackendError(MeshTexError):
    """The backend reported a failure or returned an unusable payload."""


class ProtocolError(BackendError):
    """The wire payload violates the protocol (bad version, missing field)."""


class Timeout(BackendError):
    """The backend did not answer within the allotted time."""
