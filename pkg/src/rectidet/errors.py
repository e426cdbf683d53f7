"""Exception types raised across the pipeline."""


class RectidetError(Exception):
    """Base class for all library errors."""


# geometry
class NonPositiveDepth(RectidetError):
    """Point has depth <= 0 and cannot be projected/unprojected."""


class DegenerateConfiguration(RectidetError):
    """Point correspondences are collinear or duplicated."""


class RankDeficient(RectidetError):
    """Homography design matrix has no unique null direction."""


class DegeneratePlane(RectidetError):
    """Plane distance too close to zero for a closed-form homography."""


class PointAtInfinity(RectidetError):
    """Homogeneous coordinate vanishes under a projective map."""


class SingularHomography(RectidetError):
    """Homography determinant below the degeneracy threshold."""


# plane segmentation
class InsufficientPoints(RectidetError):
    """Too few valid points to fit a plane."""


class NoConsensus(RectidetError):
    """RANSAC found no plane with enough inliers."""


class DegenerateCentroid(RectidetError):
    """Plane passes (numerically) through the origin; normal cannot be oriented."""


class DegenerateHull(RectidetError):
    """Plane inliers are collinear; no 2D hull exists."""


# rectification
class DegenerateUpAxis(RectidetError):
    """Both camera axes are parallel to the plane normal."""


class PlaneBehindCamera(RectidetError):
    """Sampled plane points do not project with positive depth."""


class BoundaryBehindCamera(RectidetError):
    """A plane boundary point is behind the virtual camera."""


class NoPlaneFound(RectidetError):
    """Frame yielded no usable plane for rectification."""


# detection
class BackendUnavailable(RectidetError):
    """Detector backend failed to start or died."""


class ProtocolViolation(RectidetError):
    """Detector backend sent a malformed or unexpected record."""


class Timeout(RectidetError):
    """Detector backend missed the per-request deadline."""


class TemplateLargerThanTile(RectidetError):
    """Reference-detector template exceeds the tile dimensions."""


class DegenerateBox(RectidetError):
    """Back-projected box clips to (almost) nothing inside the image."""


# evaluation
class UnknownClassId(RectidetError):
    """Prediction carries a class id outside the declared class set."""


class MissingAngleMetadata(RectidetError):
    """Per-angle report requested but a frame has no angle metadata."""


# dataset io
class FileMissing(RectidetError):
    """Expected input file does not exist."""


class DimensionMismatch(RectidetError):
    """RGB and depth rasters do not share dimensions."""


class MalformedIntrinsics(RectidetError):
    """Intrinsics file is unreadable or violates its invariants."""


class ParseError(RectidetError):
    """Annotation/detection file failed to parse; message carries diagnostics."""


# synthesis
class PlaneOutOfView(RectidetError):
    """Synthetic plane is entirely outside the camera frustum."""


class IoFailure(RectidetError):
    """Could not write a generated dataset."""
