"""Synthetic RGB-D scenes of textured planar signs with exact ground truth.

A flat board carrying class-coded sign textures is posed at a known
yaw/pitch/distance in front of a pinhole camera. RGB comes from analytic
ray-plane intersection with bilinear texture sampling; depth from the exact
intersection range plus a quadratic noise model (sigma = a + b * z^2,
Realsense-like). Because pose, plane and homographies are known in closed
form, these scenes act as the verification oracle for segmentation,
rectification and detection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import (
    FrameRecord,
    _write_json,
    save_annotations,
    save_depth,
    save_intrinsics,
    save_rgb,
)
from .errors import IoFailure, PlaneOutOfView
from .evaluation import GroundTruthFrame
from .geometry import (
    CameraIntrinsics,
    Homography,
    RigidTransform,
    closed_form_homography,
    project,
)
from .imageops import bilinear_sample
from .planes import PlaneModel, _hull_on_plane
from .rectify import canonical_viewpoint

NUM_CLASSES = 13
DEFAULT_ANGLES = (-75.0, -60.0, -45.0, -30.0, 0.0, 30.0, 45.0, 60.0, 75.0)
DEFAULT_DISTANCES = (1.25, 1.50, 1.75)
DEFAULT_SIGN_SIZE = 0.24
DEFAULT_STANDOFF = 1.2
# Templates are rendered as if seen fronto-parallel from this distance. It
# sits between the canonical standoff (1.2 m) and the far end of the distance
# grid so the single-scale matcher is never more than ~20 % off scale.
DEFAULT_TEMPLATE_DISTANCE = 1.44
TEXTURE_PPM = 500  # board texture resolution, pixels per meter
_BOARD_COLOR = (186, 179, 168)
_BACKGROUND_COLOR = (54, 57, 62)

# Sign textures are binary angular (pinwheel) patterns: 16 sectors, one bit
# per sector (MSB = sector 0). Angular structure is invariant to scaling
# about the sign center, which is what lets a single-scale matcher cover the
# distance grid. The codes below were selected so that every pair keeps peak
# normalized cross-correlation < 0.39 over shifts and the scene's scale range,
# each code stays > 0.7 against its own rescaled renders, and each code falls
# below 0.5 against its own 60-degree-slanted render (an oblique view must be
# a miss until rectified).
_SECTORS = 16
_SUPERSAMPLE = 4
_DARK, _LIGHT = 30, 235
_WEDGE_PROFILES = (
    0b1001100110100000,
    0b0110100101001011,
    0b1011010001010010,
    0b1010111000000010,
    0b0111001100101010,
    0b0011001010110111,
    0b1001100011001010,
    0b0101011110011011,
    0b1000000110011001,
    0b1100100001011000,
    0b1110010101000101,
    0b0100110000101100,
    0b0101010111100110,
)

DEFAULT_INTRINSICS = CameraIntrinsics(fx=600.0, fy=600.0, cx=640.0, cy=360.0,
                                      width=1280, height=720)


@dataclass(frozen=True)
class SignPlacement:
    class_id: int
    center: tuple[float, float]  # in-plane meters, (right, down) from board center
    size_m: float = DEFAULT_SIGN_SIZE


DEFAULT_PLACEMENT_SLOTS = ((0.0, 0.0), (-0.45, -0.28), (0.45, -0.28),
                           (-0.45, 0.28), (0.45, 0.28))


@dataclass(frozen=True)
class SceneSpec:
    yaw_deg: float = 0.0
    pitch_deg: float = 0.0
    distance_m: float = 1.2
    signs: tuple = ()
    plane_extent: tuple[float, float] = (1.5, 1.0)  # meters (width, height)
    intrinsics: CameraIntrinsics = DEFAULT_INTRINSICS
    noise_a: float = 0.001  # sigma = a + b * z^2, meters
    noise_b: float = 0.0019
    outlier_fraction: float = 0.0
    rng_seed: int = 0
    background: str = "flat"

    def __post_init__(self):
        if self.distance_m <= 0:
            raise ValueError("distance must be positive")
        if abs(self.yaw_deg) >= 85 or abs(self.pitch_deg) >= 85:
            raise ValueError("|yaw| and |pitch| must be < 85 degrees")
        if self.noise_a < 0 or self.noise_b < 0 or self.outlier_fraction < 0:
            raise ValueError("noise parameters must be >= 0")
        object.__setattr__(self, "signs", tuple(self.signs))


@dataclass(frozen=True, eq=False)
class SynthGroundTruth:
    plane: PlaneModel
    canonical_homography: Homography
    frame: GroundTruthFrame
    board_axes: np.ndarray  # columns: in-plane right, in-plane down, facing
    board_center: np.ndarray


def sign_bits(class_id: int) -> np.ndarray:
    """Per-sector boolean code of one class, sector 0 first."""
    profile = _WEDGE_PROFILES[class_id % NUM_CLASSES]
    return np.array(
        [(profile >> (_SECTORS - 1 - s)) & 1 for s in range(_SECTORS)], dtype=bool
    )


def sign_texture(class_id: int, size_px: int) -> np.ndarray:
    """Anti-aliased render of a class pattern at an arbitrary pixel size."""
    bits = sign_bits(class_id)
    n = size_px * _SUPERSAMPLE
    c = (n - 1) / 2.0
    ys, xs = np.mgrid[0:n, 0:n]
    ang = (np.arctan2(ys - c, xs - c) + np.pi) / (2.0 * np.pi)
    sector = np.minimum((ang * _SECTORS).astype(int), _SECTORS - 1)
    img = np.where(bits[sector], float(_LIGHT), float(_DARK))
    gray = img.reshape(size_px, _SUPERSAMPLE, size_px, _SUPERSAMPLE).mean(axis=(1, 3))
    gray = np.clip(np.rint(gray), 0, 255).astype(np.uint8)
    return np.repeat(gray[..., None], 3, axis=2)


def make_template(
    class_id: int,
    sign_size_m: float = DEFAULT_SIGN_SIZE,
    fx: float = DEFAULT_INTRINSICS.fx,
    distance_m: float = DEFAULT_TEMPLATE_DISTANCE,
) -> np.ndarray:
    """Sign texture at the pixel scale of a fronto-parallel view at distance_m."""
    size_px = max(4, round(sign_size_m * fx / distance_m))
    return sign_texture(class_id, size_px)


def board_canvas(spec: SceneSpec) -> np.ndarray:
    """Texture raster of the whole board with signs pasted, TEXTURE_PPM px/m."""
    ex, ey = spec.plane_extent
    canvas = np.empty((max(1, round(ey * TEXTURE_PPM)), max(1, round(ex * TEXTURE_PPM)), 3),
                      dtype=np.uint8)
    canvas[:] = _BOARD_COLOR
    for sign in spec.signs:
        size_px = max(2, round(sign.size_m * TEXTURE_PPM))
        tex = sign_texture(sign.class_id, size_px)
        cx = (sign.center[0] + ex / 2.0) * TEXTURE_PPM
        cy = (sign.center[1] + ey / 2.0) * TEXTURE_PPM
        x0 = round(cx - size_px / 2.0)
        y0 = round(cy - size_px / 2.0)
        if x0 < 0 or y0 < 0 or x0 + size_px > canvas.shape[1] or y0 + size_px > canvas.shape[0]:
            raise ValueError(f"sign {sign} exceeds the board extent")
        canvas[y0:y0 + size_px, x0:x0 + size_px] = tex
    return canvas


@dataclass(frozen=True, eq=False)
class _Board:
    center: np.ndarray
    u: np.ndarray  # in-plane right
    v: np.ndarray  # in-plane down
    normal: np.ndarray  # oriented away from the origin (unique-normal rule)
    d: float
    extent: tuple[float, float]
    canvas: np.ndarray


def _rot_y(deg: float) -> np.ndarray:
    c, s = math.cos(math.radians(deg)), math.sin(math.radians(deg))
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _rot_x(deg: float) -> np.ndarray:
    c, s = math.cos(math.radians(deg)), math.sin(math.radians(deg))
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _make_board(spec: SceneSpec) -> _Board:
    rot = _rot_x(spec.pitch_deg) @ _rot_y(spec.yaw_deg)
    center = np.array([0.0, 0.0, spec.distance_m])
    u = rot @ np.array([1.0, 0.0, 0.0])
    v = rot @ np.array([0.0, 1.0, 0.0])
    facing = rot @ np.array([0.0, 0.0, -1.0])  # toward the camera
    normal = -facing
    return _Board(
        center=center,
        u=u,
        v=v,
        normal=normal,
        d=float(np.dot(normal, center)),
        extent=spec.plane_extent,
        canvas=board_canvas(spec),
    )


def _raycast(
    board: _Board,
    origin: np.ndarray,
    rotation: np.ndarray,
    fx: float,
    fy: float,
    cx: float,
    cy: float,
    width: int,
    height: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Intersect every pixel ray with the board plane.

    Returns (rgb float64 HxWx3 with background fill, on-board mask, range z
    along the casting camera's optical axis; z = 0 off-board).
    """
    us, vs = np.meshgrid(np.arange(width, dtype=np.float64),
                         np.arange(height, dtype=np.float64))
    dirs = np.stack([(us - cx) / fx, (vs - cy) / fy, np.ones_like(us)], axis=-1)
    dirs_w = dirs @ rotation.T
    denom = dirs_w @ board.normal
    safe = np.abs(denom) > 1e-12
    lam = np.where(
        safe,
        (board.d - float(np.dot(board.normal, origin))) / np.where(safe, denom, 1.0),
        -1.0,
    )
    hits = origin + lam[..., None] * dirs_w
    rel = hits - board.center
    a = rel @ board.u
    b = rel @ board.v
    ex, ey = board.extent
    onboard = (lam > 1e-9) & (np.abs(a) <= ex / 2) & (np.abs(b) <= ey / 2)
    tex_x = (a + ex / 2) * TEXTURE_PPM - 0.5
    tex_y = (b + ey / 2) * TEXTURE_PPM - 0.5
    rgb = np.empty((height, width, 3), dtype=np.float64)
    rgb[:] = _BACKGROUND_COLOR
    samples = bilinear_sample(board.canvas, np.where(onboard, tex_x, 0.0),
                              np.where(onboard, tex_y, 0.0))
    rgb[onboard] = samples[onboard]
    return rgb, onboard, np.where(onboard, lam, 0.0)


def render_scene(
    spec: SceneSpec, standoff: float = DEFAULT_STANDOFF, frame_id: str | None = None
) -> tuple[FrameRecord, SynthGroundTruth]:
    """Render the scene from the reference camera at the origin.

    Ground truth carries the exact plane (with the on-board pixels as
    inliers), the analytic canonical homography for the given standoff, and
    the exact projected sign boxes.
    """
    k = spec.intrinsics
    board = _make_board(spec)
    rgb_f, onboard, z = _raycast(
        board, np.zeros(3), np.eye(3), k.fx, k.fy, k.cx, k.cy, k.width, k.height
    )
    if not onboard.any():
        raise PlaneOutOfView(f"board invisible at yaw={spec.yaw_deg} dist={spec.distance_m}")
    rgb = np.clip(np.rint(rgb_f), 0, 255).astype(np.uint8)

    rng = np.random.default_rng(spec.rng_seed)
    z_noisy = z.copy()
    if spec.noise_a > 0 or spec.noise_b > 0:
        sigma = spec.noise_a + spec.noise_b * z**2
        z_noisy = z + rng.normal(size=z.shape) * sigma * onboard
    if spec.outlier_fraction > 0:
        flat_idx = np.flatnonzero(onboard.reshape(-1))
        n_out = int(round(spec.outlier_fraction * len(flat_idx)))
        if n_out:
            chosen = rng.choice(flat_idx, size=n_out, replace=False)
            flat = z_noisy.reshape(-1)
            flat[chosen] = rng.uniform(0.3, 3.0, size=n_out)
    depth_mm = np.clip(np.rint(z_noisy * 1000.0), 0, 65535).astype(np.uint16)
    depth_mm[~onboard] = 0
    depth_mm[depth_mm >= 10000] = 0

    if frame_id is None:
        frame_id = f"y{spec.yaw_deg:+07.2f}_p{spec.pitch_deg:+07.2f}_d{spec.distance_m:.2f}"

    inliers = np.flatnonzero(onboard.reshape(-1) & (depth_mm.reshape(-1) > 0))
    ex, ey = spec.plane_extent
    corners = np.array(
        [
            board.center + sx * ex / 2 * board.u + sy * ey / 2 * board.v
            for sx, sy in ((-1, -1), (1, -1), (1, 1), (-1, 1))
        ]
    )
    # The plane centroid is the mean of the *visible* exact surface points,
    # which is what segmentation computes from the same frame; the geometric
    # board center is kept separately on SynthGroundTruth.
    rows, cols = np.nonzero(onboard)
    zs = z[onboard]
    visible = np.stack(
        [(cols - k.cx) / k.fx * zs, (rows - k.cy) / k.fy * zs, zs], axis=1
    )
    centroid = visible.mean(axis=0)
    plane = PlaneModel(
        normal=board.normal,
        distance=board.d,
        centroid=centroid,
        boundary=_hull_on_plane(corners, board.normal, centroid),
        inlier_indices=inliers,
    )
    vp = canonical_viewpoint(plane, standoff)
    homography = closed_form_homography(
        k, k, vp.pose.inverse(), -plane.normal, plane.distance
    )
    annotations = []
    for sign in spec.signs:
        su, sv = sign.center
        half = sign.size_m / 2
        pts = np.array(
            [
                board.center + (su + dx * half) * board.u + (sv + dy * half) * board.v
                for dx, dy in ((-1, -1), (1, -1), (1, 1), (-1, 1))
            ]
        )
        px = project(k, pts)
        x0 = max(float(px[:, 0].min()), 0.0)
        y0 = max(float(px[:, 1].min()), 0.0)
        x1 = min(float(px[:, 0].max()), float(k.width))
        y1 = min(float(px[:, 1].max()), float(k.height))
        annotations.append((sign.class_id, (x0, y0, x1 - x0, y1 - y0)))
    gt_frame = GroundTruthFrame(
        frame_id=frame_id,
        annotations=tuple(annotations),
        angle_deg=spec.yaw_deg,
        distance_m=spec.distance_m,
        background=spec.background,
    )
    record = FrameRecord(
        frame_id=frame_id,
        rgb=rgb,
        depth_mm=depth_mm,
        intrinsics=k,
        angle_deg=spec.yaw_deg,
        distance_m=spec.distance_m,
        background=spec.background,
    )
    truth = SynthGroundTruth(
        plane=plane,
        canonical_homography=homography,
        frame=gt_frame,
        board_axes=np.stack([board.u, board.v, -board.normal], axis=1),
        board_center=board.center,
    )
    return record, truth


def render_view(
    spec: SceneSpec,
    pose: RigidTransform,
    fx: float,
    fy: float,
    cx: float,
    cy: float,
    width: int,
    height: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Render the same scene from an arbitrary camera pose (maps view coords
    to reference-camera coords). Principal point may lie outside the raster,
    which is how shifted tile views are rendered. Returns (rgb, on-board mask).
    """
    board = _make_board(spec)
    rgb_f, onboard, _ = _raycast(
        board, pose.translation, pose.rotation, fx, fy, cx, cy, width, height
    )
    return np.clip(np.rint(rgb_f), 0, 255).astype(np.uint8), onboard


def default_signs_for_frame(frame_index: int, sign_size: float = DEFAULT_SIGN_SIZE):
    """Rotating class assignment over the fixed placement slots."""
    return tuple(
        SignPlacement(
            class_id=(frame_index * len(DEFAULT_PLACEMENT_SLOTS) + slot) % NUM_CLASSES,
            center=DEFAULT_PLACEMENT_SLOTS[slot],
            size_m=sign_size,
        )
        for slot in range(len(DEFAULT_PLACEMENT_SLOTS))
    )


def sweep(
    out_dir: str | Path,
    angles=DEFAULT_ANGLES,
    distances=DEFAULT_DISTANCES,
    seed: int = 0,
    intrinsics: CameraIntrinsics = DEFAULT_INTRINSICS,
    sign_size: float = DEFAULT_SIGN_SIZE,
    template_distance: float = DEFAULT_TEMPLATE_DISTANCE,
    standoff: float = DEFAULT_STANDOFF,
    noise_a: float = 0.001,
    noise_b: float = 0.0019,
    outlier_fraction: float = 0.0,
) -> list[str]:
    """Write the angle x distance grid as a loadable dataset directory.

    Layout: rgb/, depth/, intrinsics.json, annotations.json, plus
    ground_truth_homographies.json (frame id -> row-major 3x3) and
    templates/class_<id>.png for the reference detector.
    """
    angles = list(angles)
    distances = list(distances)
    if not angles or not distances:
        raise ValueError("angle/distance grid must be non-empty")
    out_dir = Path(out_dir)
    try:
        (out_dir / "rgb").mkdir(parents=True, exist_ok=True)
        (out_dir / "depth").mkdir(parents=True, exist_ok=True)
        (out_dir / "templates").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"{out_dir}: {exc}") from exc

    frames: list[GroundTruthFrame] = []
    homographies: dict[str, list[float]] = {}
    frame_ids = []
    index = 0
    for angle in angles:
        for dist in distances:
            frame_id = f"y{angle:+07.2f}_d{dist:.2f}"
            spec = SceneSpec(
                yaw_deg=angle,
                distance_m=dist,
                signs=default_signs_for_frame(index, sign_size),
                intrinsics=intrinsics,
                noise_a=noise_a,
                noise_b=noise_b,
                outlier_fraction=outlier_fraction,
                rng_seed=seed * 100003 + index,
            )
            record, truth = render_scene(spec, standoff=standoff, frame_id=frame_id)
            try:
                save_rgb(out_dir / "rgb" / f"{frame_id}.png", record.rgb)
                save_depth(out_dir / "depth" / f"{frame_id}.png", record.depth_mm)
            except OSError as exc:
                raise IoFailure(f"{out_dir}: {exc}") from exc
            frames.append(truth.frame)
            homographies[frame_id] = [float(v) for v in truth.canonical_homography.matrix.reshape(-1)]
            frame_ids.append(frame_id)
            index += 1
    save_intrinsics(out_dir / "intrinsics.json", intrinsics)
    save_annotations(out_dir / "annotations.json", frames)
    _write_json(out_dir / "ground_truth_homographies.json", homographies)
    for class_id in range(NUM_CLASSES):
        save_rgb(
            out_dir / "templates" / f"class_{class_id}.png",
            make_template(class_id, sign_size, intrinsics.fx, template_distance),
        )
    return frame_ids
