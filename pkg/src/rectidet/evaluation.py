"""Detection metrics: IoU, interpolated AP/AR, per-angle breakdowns.

Matching follows the usual protocol: per class and IoU threshold, predictions
are matched greedily in score order to the best unmatched ground-truth box in
their frame. AP is the 101-point interpolated area under the pooled
precision-recall curve; AR is recall with at most 100 detections per frame,
averaged over classes and thresholds.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import MissingAngleMetadata, UnknownClassId

COCO_THRESHOLDS = tuple(round(0.50 + 0.05 * i, 2) for i in range(10))
MAX_DETECTIONS_PER_FRAME = 100
_RECALL_GRID = np.linspace(0.0, 1.0, 101)


@dataclass(frozen=True)
class GroundTruthFrame:
    """Annotations for one frame: (class_id, (x, y, w, h)) pairs plus metadata."""

    frame_id: str
    annotations: tuple
    angle_deg: float | None = None
    distance_m: float | None = None
    background: str | None = None

    def __post_init__(self):
        object.__setattr__(
            self,
            "annotations",
            tuple(
                (int(cid), (float(b[0]), float(b[1]), float(b[2]), float(b[3])))
                for cid, b in self.annotations
            ),
        )


@dataclass(frozen=True)
class EvalReport:
    map50: float
    map75: float
    map_50_95: float
    ar_50_95: float
    num_frames: int = 0
    num_annotations: int = 0

    def row(self) -> tuple[float, float, float, float]:
        return (self.map50, self.map75, self.map_50_95, self.ar_50_95)


def iou(box_a: Sequence[float], box_b: Sequence[float]) -> float:
    """Intersection-over-union of two (x, y, w, h) boxes; 0 for empty union."""
    ax, ay, aw, ah = box_a
    bx, by, bw, bh = box_b
    if aw <= 0 or ah <= 0 or bw <= 0 or bh <= 0:
        return 0.0
    ix = min(ax + aw, bx + bw) - max(ax, bx)
    iy = min(ay + ah, by + bh) - max(ay, by)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    union = aw * ah + bw * bh - inter
    return float(inter / union) if union > 0 else 0.0


def _sorted_preds(preds):
    """Deterministic score ordering: ties broken by bbox coordinates."""
    return sorted(preds, key=lambda d: (-d.score, d.bbox[0], d.bbox[1], d.bbox[2], d.bbox[3]))


def _match_class(
    preds_by_frame: Mapping[str, list],
    gts_by_frame: Mapping[str, list],
    threshold: float,
    max_dets: int | None,
) -> tuple[np.ndarray, np.ndarray, int]:
    """Greedy per-frame matching; returns pooled (scores, tp flags, n_gt)."""
    scores: list[float] = []
    tps: list[bool] = []
    n_gt = 0
    for frame_id in sorted(set(preds_by_frame) | set(gts_by_frame)):
        gt_boxes = gts_by_frame.get(frame_id, [])
        n_gt += len(gt_boxes)
        preds = _sorted_preds(preds_by_frame.get(frame_id, []))
        if max_dets is not None:
            preds = preds[:max_dets]
        taken = [False] * len(gt_boxes)
        for det in preds:
            best_iou = 0.0
            best_gt = -1
            for gi, gbox in enumerate(gt_boxes):
                if taken[gi]:
                    continue
                ov = iou(det.bbox, gbox)
                if ov > best_iou:
                    best_iou = ov
                    best_gt = gi
            if best_gt >= 0 and best_iou >= threshold:
                taken[best_gt] = True
                tps.append(True)
            else:
                tps.append(False)
            scores.append(det.score)
    return np.asarray(scores, dtype=float), np.asarray(tps, dtype=bool), n_gt


def _average_precision(scores: np.ndarray, tps: np.ndarray, n_gt: int) -> float:
    """101-point interpolated AP from pooled scored matches."""
    if n_gt == 0:
        return 0.0
    if len(scores) == 0:
        return 0.0
    order = np.argsort(-scores, kind="stable")
    tp = tps[order].astype(float)
    cum_tp = np.cumsum(tp)
    cum_fp = np.cumsum(1.0 - tp)
    recall = cum_tp / n_gt
    precision = cum_tp / np.maximum(cum_tp + cum_fp, 1e-12)
    # Precision envelope: best precision at recall >= r.
    for i in range(len(precision) - 2, -1, -1):
        precision[i] = max(precision[i], precision[i + 1])
    idx = np.searchsorted(recall, _RECALL_GRID, side="left")
    sampled = np.where(idx < len(precision), precision[np.minimum(idx, len(precision) - 1)], 0.0)
    return float(sampled.mean())


def _split_by_class(preds_by_frame, gt_frames, class_ids):
    gt_classes = set()
    gts: dict[int, dict[str, list]] = {}
    for frame in gt_frames:
        for cid, bbox in frame.annotations:
            gt_classes.add(cid)
            gts.setdefault(cid, {}).setdefault(frame.frame_id, []).append(bbox)
    known = set(class_ids) if class_ids is not None else None
    preds: dict[int, dict[str, list]] = {}
    frame_ids = {f.frame_id for f in gt_frames}
    for frame_id, dets in preds_by_frame.items():
        if frame_id not in frame_ids:
            raise ValueError(f"predictions reference unknown frame {frame_id!r}")
        for det in dets:
            if known is not None and det.class_id not in known:
                raise UnknownClassId(f"class {det.class_id} in frame {frame_id!r}")
            preds.setdefault(det.class_id, {}).setdefault(frame_id, []).append(det)
    return preds, gts, sorted(gt_classes)


def evaluate(
    preds_by_frame: Mapping[str, Sequence],
    gt_frames: Sequence[GroundTruthFrame],
    thresholds: Sequence[float] = COCO_THRESHOLDS,
    class_ids: Sequence[int] | None = None,
) -> EvalReport:
    """Score predictions against ground truth over the IoU threshold sweep.

    Only classes present in the ground truth contribute to the means, so a
    class the dataset never shows cannot dilute the score. Empty predictions
    give an all-zero report; perfect predictions give an all-one report.
    """
    preds, gts, classes = _split_by_class(preds_by_frame, gt_frames, class_ids)
    if not classes:
        return EvalReport(0.0, 0.0, 0.0, 0.0, len(gt_frames), 0)
    thresholds = [round(float(t), 2) for t in thresholds]
    ap = np.zeros((len(classes), len(thresholds)))
    ar = np.zeros_like(ap)
    for ci, cid in enumerate(classes):
        class_preds = preds.get(cid, {})
        class_gts = gts[cid]
        for ti, thr in enumerate(thresholds):
            scores, tps, n_gt = _match_class(class_preds, class_gts, thr, None)
            ap[ci, ti] = _average_precision(scores, tps, n_gt)
            _, tps_cap, n_gt = _match_class(
                class_preds, class_gts, thr, MAX_DETECTIONS_PER_FRAME
            )
            ar[ci, ti] = tps_cap.sum() / n_gt if n_gt else 0.0
    map_by_thr = ap.mean(axis=0)
    n_ann = sum(len(f.annotations) for f in gt_frames)

    def at(thr: float) -> float:
        return float(map_by_thr[thresholds.index(thr)]) if thr in thresholds else 0.0

    return EvalReport(
        map50=at(0.50),
        map75=at(0.75),
        map_50_95=float(map_by_thr.mean()),
        ar_50_95=float(ar.mean()),
        num_frames=len(gt_frames),
        num_annotations=n_ann,
    )


def report_by_angle(
    preds_by_frame: Mapping[str, Sequence],
    gt_frames: Sequence[GroundTruthFrame],
    thresholds: Sequence[float] = COCO_THRESHOLDS,
) -> dict[float, EvalReport]:
    """Evaluate each viewing-angle partition separately (sorted by angle)."""
    groups: dict[float, list[GroundTruthFrame]] = {}
    for frame in gt_frames:
        if frame.angle_deg is None:
            raise MissingAngleMetadata(f"frame {frame.frame_id!r} has no angle")
        groups.setdefault(float(frame.angle_deg), []).append(frame)
    out = {}
    for angle in sorted(groups):
        frames = groups[angle]
        ids = {f.frame_id for f in frames}
        preds = {fid: dets for fid, dets in preds_by_frame.items() if fid in ids}
        out[angle] = evaluate(preds, frames, thresholds)
    return out


def format_report_table(rows: Mapping[str, EvalReport]) -> str:
    """Render labeled reports as a fixed-width text table."""
    header = f"{'':>12}  {'mAP@.50':>8}  {'mAP@.75':>8}  {'mAP@[.5:.95]':>13}  {'AR@[.5:.95]':>12}"
    lines = [header, "-" * len(header)]
    for label, rep in rows.items():
        lines.append(
            f"{label:>12}  {rep.map50:8.3f}  {rep.map75:8.3f}  "
            f"{rep.map_50_95:13.3f}  {rep.ar_50_95:12.3f}"
        )
    return "\n".join(lines)
