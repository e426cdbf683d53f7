"""Template detection on rectified tiles and mapping results back.

The reference detector is single-scale zero-normalized cross-correlation:
deliberately brittle under perspective so that the benefit of rectification
is measurable, but accurate on fronto-parallel views of the training scale.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.ndimage import maximum_filter
from scipy.signal import fftconvolve

from .errors import DegenerateBox, PointAtInfinity, TemplateLargerThanTile
from .evaluation import iou
from .geometry import apply_homography
from .rectify import RectifiedTile, TileSpec

DEFAULT_SCORE_THRESHOLD = 0.60
# A correlation window must be almost entirely made of valid pixels before it
# is allowed to fire, so warped-in border garbage cannot score.
_MIN_WINDOW_VALID = 0.99
_TEMPLATE_FILE_RE = re.compile(r"^class_(\d+)\.png$")


@dataclass(frozen=True)
class Detection:
    """One detected box: (x, y, w, h) in pixels of the space named by frame_space."""

    class_id: int
    score: float
    bbox: tuple[float, float, float, float]
    frame_space: str = "original"

    def __post_init__(self):
        object.__setattr__(self, "bbox", tuple(float(v) for v in self.bbox))
        object.__setattr__(self, "score", float(self.score))
        object.__setattr__(self, "class_id", int(self.class_id))

    def to_dict(self) -> dict:
        return {
            "class_id": self.class_id,
            "score": self.score,
            "bbox": list(self.bbox),
            "frame_space": self.frame_space,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Detection":
        return cls(
            class_id=data["class_id"],
            score=data["score"],
            bbox=tuple(data["bbox"]),
            frame_space=data.get("frame_space", "original"),
        )


def load_templates(directory: str | Path) -> list[tuple[int, np.ndarray]]:
    """Load class_<id>.png templates, sorted by class id."""
    from .dataset import load_rgb  # local import: dataset depends on this module

    directory = Path(directory)
    out = []
    for path in sorted(directory.glob("class_*.png")):
        m = _TEMPLATE_FILE_RE.match(path.name)
        if m:
            out.append((int(m.group(1)), load_rgb(path)))
    out.sort(key=lambda t: t[0])
    return out


def _box_sums(arr: np.ndarray, th: int, tw: int) -> np.ndarray:
    """Sum of every th x tw window via an integral image; (H-th+1, W-tw+1)."""
    ii = np.zeros((arr.shape[0] + 1, arr.shape[1] + 1), dtype=np.float64)
    ii[1:, 1:] = arr.cumsum(axis=0).cumsum(axis=1)
    return ii[th:, tw:] - ii[:-th, tw:] - ii[th:, :-tw] + ii[:-th, :-tw]


def zncc_map(
    image: np.ndarray, valid: np.ndarray, template: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Zero-normalized cross-correlation of template against every window.

    Returns (scores, eligible): scores in [-1, 1] indexed by window top-left,
    0 where the window or the template is textureless; eligible marks windows
    whose pixels are (almost) all valid.
    """
    img = np.asarray(image, dtype=np.float64)
    tpl = np.asarray(template, dtype=np.float64)
    if img.ndim == 2:
        img = img[..., None]
    if tpl.ndim == 2:
        tpl = tpl[..., None]
    th, tw, ch = tpl.shape
    if th > img.shape[0] or tw > img.shape[1]:
        raise TemplateLargerThanTile(
            f"template {th}x{tw} exceeds tile {img.shape[0]}x{img.shape[1]}"
        )
    n = th * tw * ch
    tpl0 = tpl - tpl.mean()
    tpl_norm = np.sqrt((tpl0**2).sum())
    shape = (img.shape[0] - th + 1, img.shape[1] - tw + 1)
    eligible = _box_sums(valid.astype(np.float64), th, tw) >= _MIN_WINDOW_VALID * th * tw
    if tpl_norm < 1e-9:
        return np.zeros(shape), eligible
    kernel = tpl0[::-1, ::-1]
    cross = np.zeros(shape)
    for c in range(ch):
        cross += fftconvolve(img[..., c], kernel[..., c], mode="valid")
    flat = img.sum(axis=2)
    s1 = _box_sums(flat, th, tw)
    s2 = _box_sums((img**2).sum(axis=2), th, tw)
    var = np.maximum(s2 - s1**2 / n, 0.0)
    denom = np.sqrt(var) * tpl_norm
    scores = np.where(denom > 1e-9, cross / np.maximum(denom, 1e-12), 0.0)
    return np.clip(scores, -1.0, 1.0), eligible


def _as_gray(image: np.ndarray) -> np.ndarray:
    arr = np.asarray(image, dtype=np.float64)
    return arr.mean(axis=2) if arr.ndim == 3 else arr


def reference_detect(
    tile: RectifiedTile,
    templates: list[tuple[int, np.ndarray]],
    threshold: float = DEFAULT_SCORE_THRESHOLD,
) -> list[Detection]:
    """Single-scale ZNCC template matching on one tile.

    Correlation runs on the channel mean. Each template produces detections
    at local score maxima above the threshold; boxes are template-sized with
    the window top-left as corner, in tile pixel coordinates.
    """
    gray = _as_gray(tile.image)
    mask = np.asarray(tile.mask, dtype=bool)
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    dets = []
    for class_id, template in templates:
        th, tw = template.shape[:2]
        if th > gray.shape[0] or tw > gray.shape[1]:
            raise TemplateLargerThanTile(
                f"template {th}x{tw} exceeds tile {gray.shape[0]}x{gray.shape[1]}"
            )
        if rows.size == 0:
            continue
        # Only windows near the valid region can be eligible: an eligible
        # window tolerates at most (1 - _MIN_WINDOW_VALID) * area invalid
        # pixels, and everything outside the valid bounding box is invalid,
        # so cropping to the padded box is exact, not an approximation.
        pad_y = int((1.0 - _MIN_WINDOW_VALID) * th) + 1
        pad_x = int((1.0 - _MIN_WINDOW_VALID) * tw) + 1
        y0 = max(int(rows[0]) - pad_y, 0)
        y1 = min(int(rows[-1]) + 1 + pad_y, gray.shape[0])
        x0 = max(int(cols[0]) - pad_x, 0)
        x1 = min(int(cols[-1]) + 1 + pad_x, gray.shape[1])
        if y1 - y0 < th or x1 - x0 < tw:
            continue
        scores, eligible = zncc_map(
            gray[y0:y1, x0:x1], mask[y0:y1, x0:x1], _as_gray(template)
        )
        masked = np.where(eligible, scores, -1.0)
        foot = (max(3, th // 2) | 1, max(3, tw // 2) | 1)
        peaks = (masked >= threshold) & (masked >= maximum_filter(masked, size=foot))
        ys, xs = np.nonzero(peaks)
        for y, x in zip(ys.tolist(), xs.tolist()):
            dets.append(
                Detection(
                    class_id=class_id,
                    score=float(masked[y, x]),
                    bbox=(float(x + x0), float(y + y0), float(tw), float(th)),
                    frame_space="tile",
                )
            )
    dets.sort(key=lambda d: (-d.score, d.class_id, d.bbox))
    return dets


def backproject(
    detections: list[Detection],
    spec: TileSpec,
    source_width: int,
    source_height: int,
) -> list[Detection]:
    """Map tile-space boxes to the original image via the inverse homography.

    The warped quadrilateral is replaced by its axis-aligned bounding box,
    clipped to the source bounds; boxes that collapse below one pixel of area
    raise DegenerateBox.
    """
    hinv = spec.homography.inverse()
    out = []
    for det in detections:
        x, y, w, h = det.bbox
        corners = np.array([[x, y], [x + w, y], [x + w, y + h], [x, y + h]])
        try:
            src = apply_homography(hinv, corners)
        except PointAtInfinity as exc:
            raise DegenerateBox(str(exc)) from exc
        x0 = max(float(src[:, 0].min()), 0.0)
        y0 = max(float(src[:, 1].min()), 0.0)
        x1 = min(float(src[:, 0].max()), float(source_width))
        y1 = min(float(src[:, 1].max()), float(source_height))
        # extents go negative when the quad misses the source bounds entirely
        if x1 - x0 <= 0.0 or y1 - y0 <= 0.0 or (x1 - x0) * (y1 - y0) < 1.0:
            raise DegenerateBox(f"back-projected box {det.bbox} lost its area")
        out.append(replace(det, bbox=(x0, y0, x1 - x0, y1 - y0), frame_space="original"))
    return out


def extended_nms(detections: list[Detection], iou_threshold: float = 0.5) -> list[Detection]:
    """Greedy per-class non-maximum suppression over a pooled detection list.

    Needed because overlapping tiles produce near-duplicate boxes for the
    same object. Ties in score break deterministically on bbox coordinates.
    """
    kept: list[Detection] = []
    by_class: dict[int, list[Detection]] = {}
    for det in detections:
        by_class.setdefault(det.class_id, []).append(det)
    for class_id in sorted(by_class):
        accepted: list[Detection] = []
        pool = sorted(by_class[class_id], key=lambda d: (-d.score, d.bbox))
        for det in pool:
            if all(iou(det.bbox, a.bbox) < iou_threshold for a in accepted):
                accepted.append(det)
        kept.extend(accepted)
    kept.sort(key=lambda d: (-d.score, d.class_id, d.bbox))
    return kept


def detect_tiles(tiles: list[RectifiedTile], backend) -> list[tuple[RectifiedTile, list[Detection]]]:
    """Run the backend over every tile, tagging results with the tile's space."""
    results = []
    for tile in tiles:
        i, j = tile.spec.indices
        space = f"tile:p{tile.plane_index}:i{i}:j{j}"
        dets = [replace(d, frame_space=space) for d in backend.detect(tile)]
        results.append((tile, dets))
    return results
