"""Exception hierarchy shared by all groundgeom modules."""


class GroundGeomError(Exception):
    """Base class for every error raised by this package."""


class NonPositiveDepth(GroundGeomError, ValueError):
    """Depth (or camera-frame z) must be strictly positive."""


class DegenerateNormal(GroundGeomError, ValueError):
    """Plane normal is parallel to the viewing direction; roll/pitch undefined."""


class HorizonAtInfinity(GroundGeomError, ValueError):
    """Horizon line cannot be expressed in the (theta, rho) parameterization."""


class EmptyGround(GroundGeomError, ValueError):
    """Rendered scene contains no ground pixel."""


class FormatError(GroundGeomError, ValueError):
    """On-disk sample is malformed; the message names the offending field."""

    def __init__(self, field: str, detail: str = ""):
        self.field = field
        msg = field if not detail else f"{field}: {detail}"
        super().__init__(msg)


class ShapeMismatch(GroundGeomError, ValueError):
    """Map shapes disagree."""


class TooFewPoints(GroundGeomError, ValueError):
    """Fewer than three usable points for plane fitting."""


class SingularSystem(GroundGeomError, ValueError):
    """Least-squares normal equations are singular or near-singular."""


class AllDegenerate(GroundGeomError, RuntimeError):
    """No non-collinear minimal set could be sampled."""


class EmptyMask(GroundGeomError, ValueError):
    """Operation requires at least one masked valid pixel."""


class OppositeNormals(GroundGeomError, ValueError):
    """Normals cancel; their average direction is undefined."""


class ProbOutOfRange(GroundGeomError, ValueError):
    """Probabilities must lie strictly inside (0, 1)."""


class DivergedLoss(GroundGeomError, RuntimeError):
    """Refinement loss grew past the divergence guard (step size too large)."""


class CropTooSmall(GroundGeomError, ValueError):
    """Augmentation crop fell below the minimum usable size."""


class IoError(GroundGeomError, OSError):
    """Report or sample could not be written/read."""
