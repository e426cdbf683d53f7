"""Geometric rectification of planar scenes for object detection.

Planes found in an RGB-D frame are re-imaged from a virtual fronto-parallel
camera before detection; boxes are mapped back and merged, removing the
perspective/scale handicap of a single-scale detector.
"""

from .backend import ReferenceBackend, SubprocessBackend, open_backend
from .dataset import (
    Dataset,
    FrameRecord,
    depth_to_cloud,
    load_annotations,
    load_dataset,
    load_detections,
    load_frame,
    load_intrinsics,
    save_annotations,
    save_detections,
    save_intrinsics,
)
from .detect import (
    Detection,
    backproject,
    detect_tiles,
    extended_nms,
    load_templates,
    reference_detect,
)
from .errors import RectidetError
from .evaluation import (
    EvalReport,
    GroundTruthFrame,
    evaluate,
    iou,
    report_by_angle,
)
from .geometry import (
    CameraIntrinsics,
    Homography,
    RigidTransform,
    apply_homography,
    closed_form_homography,
    dlt_homography,
    project,
    unproject,
)
from .planes import (
    PlaneModel,
    PointCloud,
    SegmentationConfig,
    boundary_points,
    extract_planes,
    is_ground,
    ransac_plane,
    unique_normal,
)
from .rectify import (
    PlaneBBox,
    RectifiedTile,
    RectifyConfig,
    TileSpec,
    VirtualViewpoint,
    base_homography,
    canonical_viewpoint,
    plane_bbox_in_virtual,
    rectify_frame,
    rectify_frame_detailed,
    sliding_homographies,
    warp,
)
from .synth import SceneSpec, SignPlacement, make_template, render_scene, sweep

__version__ = "0.1.0"

__all__ = [
    "CameraIntrinsics",
    "Dataset",
    "Detection",
    "EvalReport",
    "FrameRecord",
    "GroundTruthFrame",
    "Homography",
    "PlaneBBox",
    "PlaneModel",
    "PointCloud",
    "RectidetError",
    "RectifiedTile",
    "RectifyConfig",
    "ReferenceBackend",
    "RigidTransform",
    "SceneSpec",
    "SegmentationConfig",
    "SignPlacement",
    "SubprocessBackend",
    "TileSpec",
    "VirtualViewpoint",
    "apply_homography",
    "backproject",
    "base_homography",
    "boundary_points",
    "canonical_viewpoint",
    "closed_form_homography",
    "depth_to_cloud",
    "detect_tiles",
    "dlt_homography",
    "evaluate",
    "extended_nms",
    "extract_planes",
    "iou",
    "is_ground",
    "load_annotations",
    "load_dataset",
    "load_detections",
    "load_frame",
    "load_intrinsics",
    "load_templates",
    "make_template",
    "open_backend",
    "plane_bbox_in_virtual",
    "project",
    "ransac_plane",
    "rectify_frame",
    "rectify_frame_detailed",
    "reference_detect",
    "render_scene",
    "report_by_angle",
    "save_annotations",
    "save_detections",
    "save_intrinsics",
    "sliding_homographies",
    "sweep",
    "unique_normal",
    "unproject",
    "warp",
]
