"""Dataset I/O: PNG rasters, intrinsics, annotations, detections.

On-disk layout of a dataset directory:

  rgb/<frame_id>.png          8-bit RGB
  depth/<frame_id>.png        16-bit grayscale, millimeters, 0 = invalid
  intrinsics.json             single pinhole model shared by all frames
  annotations.json            ground-truth boxes and per-frame metadata

Depth values at or above 10 m are treated as invalid on load. All JSON is
written with sorted keys and fixed indentation so identical inputs produce
byte-identical files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .detect import Detection
from .errors import (
    DimensionMismatch,
    FileMissing,
    IoFailure,
    MalformedIntrinsics,
    ParseError,
)
from .evaluation import GroundTruthFrame
from .geometry import CameraIntrinsics
from .planes import PointCloud

MAX_DEPTH_MM = 10000


def save_rgb(path: str | Path, image: np.ndarray):
    image = np.ascontiguousarray(image, dtype=np.uint8)
    Image.fromarray(image, mode="RGB").save(Path(path), format="PNG")


def load_rgb(path: str | Path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise FileMissing(str(path))
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.uint8)


def save_depth(path: str | Path, depth_mm: np.ndarray):
    depth_mm = np.ascontiguousarray(depth_mm, dtype=np.uint16)
    Image.fromarray(depth_mm.astype(np.int32), mode="I").convert("I;16").save(
        Path(path), format="PNG"
    )


def load_depth(path: str | Path) -> np.ndarray:
    """16-bit depth in millimeters; values >= 10 m are zeroed (invalid)."""
    path = Path(path)
    if not path.exists():
        raise FileMissing(str(path))
    with Image.open(path) as img:
        depth = np.asarray(img, dtype=np.uint16).copy()
    depth[depth >= MAX_DEPTH_MM] = 0
    return depth


def save_intrinsics(path: str | Path, k: CameraIntrinsics):
    payload = {
        "fx": k.fx,
        "fy": k.fy,
        "cx": k.cx,
        "cy": k.cy,
        "width": k.width,
        "height": k.height,
    }
    _write_json(path, payload)


def load_intrinsics(path: str | Path) -> CameraIntrinsics:
    path = Path(path)
    if not path.exists():
        raise FileMissing(str(path))
    try:
        data = json.loads(path.read_text())
        return CameraIntrinsics(
            fx=float(data["fx"]),
            fy=float(data["fy"]),
            cx=float(data["cx"]),
            cy=float(data["cy"]),
            width=int(data["width"]),
            height=int(data["height"]),
        )
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise MalformedIntrinsics(f"{path}: {exc}") from exc


@dataclass(frozen=True, eq=False)
class FrameRecord:
    frame_id: str
    rgb: np.ndarray
    depth_mm: np.ndarray
    intrinsics: CameraIntrinsics
    angle_deg: float | None = None
    distance_m: float | None = None
    background: str | None = None


def load_frame(
    rgb_path: str | Path,
    depth_path: str | Path,
    intrinsics: CameraIntrinsics,
    frame_id: str | None = None,
    angle_deg: float | None = None,
    distance_m: float | None = None,
    background: str | None = None,
) -> FrameRecord:
    """Load one RGB-D frame, checking sizes against the intrinsics."""
    rgb = load_rgb(rgb_path)
    depth = load_depth(depth_path)
    if rgb.shape[:2] != depth.shape[:2]:
        raise DimensionMismatch(f"rgb {rgb.shape[:2]} vs depth {depth.shape[:2]}")
    if rgb.shape[:2] != (intrinsics.height, intrinsics.width):
        raise DimensionMismatch(
            f"image {rgb.shape[:2]} vs intrinsics "
            f"{(intrinsics.height, intrinsics.width)}"
        )
    return FrameRecord(
        frame_id=frame_id if frame_id is not None else Path(rgb_path).stem,
        rgb=rgb,
        depth_mm=depth,
        intrinsics=intrinsics,
        angle_deg=angle_deg,
        distance_m=distance_m,
        background=background,
    )


def depth_to_cloud(depth_mm: np.ndarray, k: CameraIntrinsics) -> PointCloud:
    """Back-project a depth image into an organized camera-frame cloud."""
    h, w = depth_mm.shape
    z = depth_mm.astype(np.float64).reshape(-1) / 1000.0
    valid = z > 0
    us, vs = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    x = (us.reshape(-1) - k.cx) / k.fx * z
    y = (vs.reshape(-1) - k.cy) / k.fy * z
    points = np.stack([x, y, z], axis=1)
    points[~valid] = 0.0
    return PointCloud(points=points, valid=valid, width=w, height=h)


def save_annotations(path: str | Path, frames: list[GroundTruthFrame]):
    payload = {
        "frames": [
            {
                "frame_id": f.frame_id,
                "angle_deg": f.angle_deg,
                "distance_m": f.distance_m,
                "background": f.background,
                "annotations": [
                    {"class_id": cid, "bbox": list(bbox)} for cid, bbox in f.annotations
                ],
            }
            for f in sorted(frames, key=lambda f: f.frame_id)
        ]
    }
    _write_json(path, payload)


def load_annotations(path: str | Path) -> list[GroundTruthFrame]:
    path = Path(path)
    if not path.exists():
        raise FileMissing(str(path))
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    frames = []
    for idx, raw in enumerate(data.get("frames", [])):
        try:
            frames.append(
                GroundTruthFrame(
                    frame_id=raw["frame_id"],
                    annotations=tuple(
                        (ann["class_id"], tuple(ann["bbox"])) for ann in raw["annotations"]
                    ),
                    angle_deg=raw.get("angle_deg"),
                    distance_m=raw.get("distance_m"),
                    background=raw.get("background"),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"{path}: frame #{idx}: {exc!r}") from exc
    return frames


def save_detections(path: str | Path, dets_by_frame: dict[str, list[Detection]]):
    payload = {
        "frames": {
            frame_id: [d.to_dict() for d in dets]
            for frame_id, dets in sorted(dets_by_frame.items())
        }
    }
    _write_json(path, payload)


def load_detections(path: str | Path) -> dict[str, list[Detection]]:
    path = Path(path)
    if not path.exists():
        raise FileMissing(str(path))
    try:
        data = json.loads(path.read_text())
        return {
            frame_id: [Detection.from_dict(d) for d in dets]
            for frame_id, dets in data["frames"].items()
        }
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{path}: {exc!r}") from exc


@dataclass(frozen=True, eq=False)
class Dataset:
    root: Path
    intrinsics: CameraIntrinsics
    frames: list[GroundTruthFrame]

    def load_frame(self, frame_id: str) -> FrameRecord:
        meta = next((f for f in self.frames if f.frame_id == frame_id), None)
        return load_frame(
            self.root / "rgb" / f"{frame_id}.png",
            self.root / "depth" / f"{frame_id}.png",
            self.intrinsics,
            frame_id=frame_id,
            angle_deg=meta.angle_deg if meta else None,
            distance_m=meta.distance_m if meta else None,
            background=meta.background if meta else None,
        )


def load_dataset(root: str | Path) -> Dataset:
    root = Path(root)
    if not root.is_dir():
        raise FileMissing(str(root))
    intrinsics = load_intrinsics(root / "intrinsics.json")
    frames = load_annotations(root / "annotations.json")
    return Dataset(root=root, intrinsics=intrinsics, frames=frames)


def _write_json(path: str | Path, payload):
    try:
        Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    except OSError as exc:
        raise IoFailure(f"{path}: {exc}") from exc
