"""Fronto-parallel rectification of detected planes.

For each plane a virtual camera is placed on the plane normal through the
centroid at a fixed standoff, looking straight at the plane. The original
view is warped into that camera. Planes whose virtual projection exceeds the
output size are covered by a grid of overlapping tiles (stride = half the
output size in each axis) so that any object smaller than the output size
appears whole in at least one tile.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BoundaryBehindCamera,
    DegenerateUpAxis,
    InsufficientPoints,
    NonPositiveDepth,
    NoPlaneFound,
    PlaneBehindCamera,
)
from .geometry import (
    CameraIntrinsics,
    Homography,
    RigidTransform,
    dlt_homography,
    project,
)
from .imageops import bilinear_sample
from .planes import PlaneModel, PointCloud, SegmentationConfig, extract_planes

# Side length (meters) of the plane patch used to generate point
# correspondences for the base homography fit.
_PATCH_HALF = 0.25
_AXIS_ALIGN_LIMIT_DEG = 1.0


@dataclass(frozen=True, eq=False)
class VirtualViewpoint:
    """Pose of the canonical camera, mapping virtual coords to original coords."""

    pose: RigidTransform
    standoff: float


@dataclass(frozen=True)
class PlaneBBox:
    """Axis-aligned pixel bounds of the plane boundary in the virtual view."""

    top_left: tuple[int, int]  # (x, y)
    width: int
    height: int


@dataclass(frozen=True, eq=False)
class TileSpec:
    """One output tile: homography maps original pixels to tile pixels."""

    indices: tuple[int, int]  # (i, j), 1-based, i = vertical
    homography: Homography
    out_height: int
    out_width: int


@dataclass(frozen=True, eq=False)
class RectifiedTile:
    image: np.ndarray
    mask: np.ndarray
    spec: TileSpec
    plane_index: int = 0

    @property
    def valid_fraction(self) -> float:
        return float(self.mask.mean()) if self.mask.size else 0.0


@dataclass(frozen=True)
class RectifyConfig:
    segmentation: SegmentationConfig = field(default_factory=SegmentationConfig)
    standoff: float = 1.2
    out_height: int | None = None  # None: use source image size
    out_width: int | None = None
    min_valid_fraction: float = 0.05

    def __post_init__(self):
        if self.standoff <= 0:
            raise ValueError("standoff must be positive")


@dataclass(frozen=True, eq=False)
class PlaneRectification:
    """Everything produced for one plane."""

    plane: PlaneModel
    viewpoint: VirtualViewpoint
    base_homography: Homography
    bbox: PlaneBBox
    tiles: list[RectifiedTile]


def canonical_viewpoint(
    plane: PlaneModel,
    standoff: float,
    original_axes: RigidTransform | None = None,
) -> VirtualViewpoint:
    """Virtual camera looking along the plane normal from the standoff point.

    The camera sits at centroid - standoff * normal, its z-axis is the plane
    normal and its x-axis is the original camera x-axis projected onto the
    plane (falling back to the y-axis when x is within 1 degree of the
    normal). A fronto-parallel plane at the standoff distance yields the
    identity pose.
    """
    if original_axes is None:
        original_axes = RigidTransform.identity()
    n = plane.normal
    limit = math.cos(math.radians(_AXIS_ALIGN_LIMIT_DEG))
    ref = None
    for col in (0, 1):
        axis = original_axes.rotation[:, col]
        if abs(float(np.dot(axis, n))) <= limit:
            ref = axis
            break
    if ref is None:
        raise DegenerateUpAxis("camera x- and y-axes both within 1 degree of the normal")
    u = ref - np.dot(ref, n) * n
    u = u / np.linalg.norm(u)
    v = np.cross(n, u)
    rotation = np.stack([u, v, n], axis=1)
    translation = plane.centroid - standoff * n
    return VirtualViewpoint(
        pose=RigidTransform(rotation=rotation, translation=translation),
        standoff=standoff,
    )


def base_homography(
    viewpoint: VirtualViewpoint, k: CameraIntrinsics, plane: PlaneModel
) -> Homography:
    """Homography sending original pixels of the plane to virtual-view pixels.

    Fit from four coplanar point correspondences around the centroid; for an
    identity viewpoint this is the identity mapping.
    """
    u = viewpoint.pose.rotation[:, 0]
    v = viewpoint.pose.rotation[:, 1]
    corners = np.array(
        [
            plane.centroid + du * _PATCH_HALF * u + dv * _PATCH_HALF * v
            for du, dv in ((-1, -1), (1, -1), (1, 1), (-1, 1))
        ]
    )
    try:
        src = project(k, corners)
        dst = project(k, viewpoint.pose.inverse().apply(corners))
    except NonPositiveDepth as exc:
        raise PlaneBehindCamera(str(exc)) from exc
    return dlt_homography(src, dst)


def plane_bbox_in_virtual(
    plane: PlaneModel, viewpoint: VirtualViewpoint, k: CameraIntrinsics
) -> PlaneBBox:
    """Pixel bounding box of the plane boundary as seen by the virtual camera."""
    if len(plane.boundary) < 3:
        raise InsufficientPoints("plane has no boundary polygon")
    try:
        px = project(k, viewpoint.pose.inverse().apply(plane.boundary))
    except NonPositiveDepth as exc:
        raise BoundaryBehindCamera(str(exc)) from exc
    x0 = math.floor(px[:, 0].min())
    y0 = math.floor(px[:, 1].min())
    x1 = math.ceil(px[:, 0].max())
    y1 = math.ceil(px[:, 1].max())
    return PlaneBBox(top_left=(x0, y0), width=max(x1 - x0, 1), height=max(y1 - y0, 1))


def sliding_homographies(
    base: Homography, bbox: PlaneBBox, out_height: int, out_width: int
) -> list[TileSpec]:
    """Tile the virtual-view bbox with half-size strides.

    Tile (i, j) (1-based, i vertical) covers
    [x0 + (j-1) w/2, x0 + (j+1) w/2) x [y0 + (i-1) h/2, y0 + (i+1) h/2)
    of the virtual view, so consecutive tiles overlap by half and the grid
    always covers the whole bbox.
    """
    ni = 2 * math.ceil(bbox.height / out_height) - 1
    nj = 2 * math.ceil(bbox.width / out_width) - 1
    x0, y0 = bbox.top_left
    specs = []
    for i in range(1, ni + 1):
        for j in range(1, nj + 1):
            shift = Homography.translation(
                -(x0 + 0.5 * out_width * (j - 1)),
                -(y0 + 0.5 * out_height * (i - 1)),
            )
            specs.append(
                TileSpec(
                    indices=(i, j),
                    homography=shift @ base,
                    out_height=out_height,
                    out_width=out_width,
                )
            )
    return specs


def warp(image: np.ndarray, spec: TileSpec, plane_index: int = 0) -> RectifiedTile:
    """Inverse-warp the source image into a tile with bilinear sampling.

    Tile pixels that map outside the source image are zero with mask False.
    """
    hinv = spec.homography.inverse().matrix
    h, w = image.shape[:2]
    gx, gy = np.meshgrid(
        np.arange(spec.out_width, dtype=np.float64),
        np.arange(spec.out_height, dtype=np.float64),
    )
    denom = hinv[2, 0] * gx + hinv[2, 1] * gy + hinv[2, 2]
    finite = np.abs(denom) > 1e-12
    denom = np.where(finite, denom, 1.0)
    sx = (hinv[0, 0] * gx + hinv[0, 1] * gy + hinv[0, 2]) / denom
    sy = (hinv[1, 0] * gx + hinv[1, 1] * gy + hinv[1, 2]) / denom
    mask = finite & (sx >= 0) & (sx <= w - 1) & (sy >= 0) & (sy <= h - 1)
    vals = bilinear_sample(image, np.where(mask, sx, 0.0), np.where(mask, sy, 0.0))
    vals[~mask] = 0
    if image.dtype == np.uint8:
        out = np.clip(np.rint(vals), 0, 255).astype(np.uint8)
    else:
        out = vals.astype(image.dtype)
    return RectifiedTile(image=out, mask=mask, spec=spec, plane_index=plane_index)


def rectify_frame_detailed(
    rgb: np.ndarray,
    cloud: PointCloud,
    k: CameraIntrinsics,
    cfg: RectifyConfig | None = None,
) -> list[PlaneRectification]:
    """Segment planes and build the full set of rectified tiles per plane.

    Tiles with less than min_valid_fraction valid pixels are discarded.
    Raises NoPlaneFound when segmentation yields nothing usable; callers may
    fall back to running detection on the raw image.
    """
    if cfg is None:
        cfg = RectifyConfig()
    out_h = cfg.out_height if cfg.out_height is not None else rgb.shape[0]
    out_w = cfg.out_width if cfg.out_width is not None else rgb.shape[1]
    try:
        planes = extract_planes(cloud, cfg.segmentation)
    except InsufficientPoints as exc:
        raise NoPlaneFound(str(exc)) from exc
    results = []
    for plane_index, plane in enumerate(planes):
        try:
            vp = canonical_viewpoint(plane, cfg.standoff)
            base = base_homography(vp, k, plane)
            bbox = plane_bbox_in_virtual(plane, vp, k)
        except (PlaneBehindCamera, BoundaryBehindCamera, DegenerateUpAxis):
            continue
        tiles = [
            tile
            for tile in (
                warp(rgb, spec, plane_index=plane_index)
                for spec in sliding_homographies(base, bbox, out_h, out_w)
            )
            if tile.valid_fraction >= cfg.min_valid_fraction
        ]
        results.append(
            PlaneRectification(
                plane=plane, viewpoint=vp, base_homography=base, bbox=bbox, tiles=tiles
            )
        )
    if not any(r.tiles for r in results):
        raise NoPlaneFound("no plane produced a usable tile")
    return results


def rectify_frame(
    rgb: np.ndarray,
    cloud: PointCloud,
    k: CameraIntrinsics,
    cfg: RectifyConfig | None = None,
) -> list[RectifiedTile]:
    """Flat list of rectified tiles for all planes in the frame."""
    return [t for r in rectify_frame_detailed(rgb, cloud, k, cfg) for t in r.tiles]
