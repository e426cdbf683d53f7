"""Batch command-line front end: rectify, detect, eval, synth."""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import backend as backend_mod
from . import dataset as ds
from .detect import (
    DEFAULT_SCORE_THRESHOLD,
    Detection,
    backproject,
    detect_tiles,
    extended_nms,
    load_templates,
)
from .errors import (
    BackendUnavailable,
    NoPlaneFound,
    ProtocolViolation,
    RectidetError,
    Timeout,
)
from .evaluation import evaluate, format_report_table, report_by_angle
from .geometry import Homography
from .planes import SegmentationConfig
from .rectify import RectifiedTile, RectifyConfig, TileSpec, rectify_frame_detailed
from .synth import (
    DEFAULT_ANGLES,
    DEFAULT_DISTANCES,
    sweep,
)

import numpy as np


def _segmentation_config(args) -> SegmentationConfig:
    return SegmentationConfig(
        inlier_threshold=args.inlier_threshold,
        stop_fraction=args.stop_fraction,
        max_planes=args.max_planes,
        rng_seed=args.seed,
    )


def _rectify_config(args) -> RectifyConfig:
    return RectifyConfig(segmentation=_segmentation_config(args), standoff=args.standoff)


def _add_pipeline_flags(p: argparse.ArgumentParser):
    p.add_argument("--standoff", type=float, default=1.2, help="virtual camera distance, m")
    p.add_argument("--max-planes", type=int, default=1)
    p.add_argument("--stop-fraction", type=float, default=0.10)
    p.add_argument("--inlier-threshold", type=float, default=0.02, help="RANSAC threshold, m")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1, help="frames processed in parallel")


def _frame_tiles(dataset: ds.Dataset, frame_id: str, cfg: RectifyConfig):
    frame = dataset.load_frame(frame_id)
    cloud = ds.depth_to_cloud(frame.depth_mm, frame.intrinsics)
    return frame, rectify_frame_detailed(frame.rgb, cloud, frame.intrinsics, cfg)


def _whole_image_tile(rgb) -> RectifiedTile:
    spec = TileSpec(
        indices=(1, 1),
        homography=Homography.identity(),
        out_height=rgb.shape[0],
        out_width=rgb.shape[1],
    )
    return RectifiedTile(image=rgb, mask=np.ones(rgb.shape[:2], dtype=bool), spec=spec)


def cmd_rectify(args) -> int:
    dataset = ds.load_dataset(args.dataset)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = _rectify_config(args)
    failures = []

    def run(frame_id: str):
        try:
            _, results = _frame_tiles(dataset, frame_id, cfg)
        except NoPlaneFound as exc:
            return frame_id, None, str(exc)
        return frame_id, results, None

    frame_ids = sorted(f.frame_id for f in dataset.frames)
    for frame_id, results, err in _map_frames(run, frame_ids, args.jobs):
        if err is not None:
            failures.append(frame_id)
            print(f"{frame_id}: no plane found ({err})", file=sys.stderr)
            continue
        n_tiles = 0
        for plane_idx, rect in enumerate(results):
            for tile in rect.tiles:
                i, j = tile.spec.indices
                stem = f"{frame_id}_p{plane_idx}_i{i}_j{j}"
                ds.save_rgb(out / f"{stem}.png", tile.image)
                rows = tile.spec.homography.matrix.reshape(-1)
                (out / f"{stem}.homography.txt").write_text(
                    " ".join(repr(float(v)) for v in rows) + "\n"
                )
                n_tiles += 1
        print(f"{frame_id}: planes={len(results)} tiles={n_tiles}")
    if failures:
        print(f"{len(failures)} frame(s) without planes: {' '.join(failures)}", file=sys.stderr)
    return 0


def _map_frames(fn, frame_ids, jobs):
    if jobs <= 1:
        return [fn(fid) for fid in frame_ids]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, frame_ids))


def cmd_detect(args) -> int:
    dataset = ds.load_dataset(args.dataset)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = _rectify_config(args)
    templates = load_templates(args.templates) if args.templates else []
    try:
        backend = backend_mod.open_backend(
            args.backend, templates=templates, threshold=args.ncc_threshold
        )
    except (BackendUnavailable, ProtocolViolation, Timeout) as exc:
        print(f"backend unavailable: {exc}", file=sys.stderr)
        return 2

    frame_ids = sorted(f.frame_id for f in dataset.frames)
    detections: dict[str, list[Detection]] = {}
    soft_failures: list[str] = []

    def prepare(frame_id: str):
        frame = dataset.load_frame(frame_id)
        if args.baseline:
            return frame, [_whole_image_tile(frame.rgb)]
        cloud = ds.depth_to_cloud(frame.depth_mm, frame.intrinsics)
        results = rectify_frame_detailed(frame.rgb, cloud, frame.intrinsics, cfg)
        return frame, [t for r in results for t in r.tiles]

    with backend:
        for frame_id in frame_ids:
            try:
                frame, tiles = prepare(frame_id)
            except NoPlaneFound as exc:
                print(f"{frame_id}: no plane found ({exc})", file=sys.stderr)
                soft_failures.append(frame_id)
                detections[frame_id] = []
                continue
            h, w = frame.rgb.shape[:2]
            try:
                tile_results = detect_tiles(tiles, backend)
            except Timeout as exc:
                print(f"{frame_id}: detector timeout ({exc})", file=sys.stderr)
                soft_failures.append(frame_id)
                detections[frame_id] = []
                continue
            except ProtocolViolation as exc:
                print(f"{frame_id}: protocol violation ({exc})", file=sys.stderr)
                soft_failures.append(frame_id)
                detections[frame_id] = []
                continue
            pooled = []
            for tile, dets in tile_results:
                pooled.extend(backproject(dets, tile.spec, w, h))
            detections[frame_id] = extended_nms(pooled, args.nms_iou)
            print(f"{frame_id}: tiles={len(tiles)} detections={len(detections[frame_id])}")
    ds.save_detections(out / "detections.json", detections)
    if soft_failures:
        print(f"{len(soft_failures)} frame(s) soft-failed: {' '.join(soft_failures)}",
              file=sys.stderr)
    return 0


def cmd_eval(args) -> int:
    preds = ds.load_detections(args.detections)
    dataset = ds.load_dataset(args.dataset)
    report = evaluate(preds, dataset.frames)
    rows = {"overall": report}
    have_angles = all(f.angle_deg is not None for f in dataset.frames)
    per_angle = {}
    if have_angles:
        per_angle = report_by_angle(preds, dataset.frames)
        for angle, rep in per_angle.items():
            rows[f"{angle:+.1f} deg"] = rep
    print(format_report_table(rows))
    if args.out:
        payload = {
            "overall": report.__dict__,
            "per_angle": {f"{a:+.1f}": r.__dict__ for a, r in per_angle.items()},
        }
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    return 0


def cmd_synth(args) -> int:
    frame_ids = sweep(
        args.out,
        angles=args.angles,
        distances=args.distances,
        seed=args.seed,
        outlier_fraction=args.outlier_fraction,
    )
    print(f"wrote {len(frame_ids)} frames to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rectidet",
        description="planar-scene rectification pipeline for object detection",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_rect = sub.add_parser("rectify", help="write rectified tiles + homography sidecars")
    p_rect.add_argument("dataset")
    p_rect.add_argument("--out", required=True)
    _add_pipeline_flags(p_rect)
    p_rect.set_defaults(func=cmd_rectify)

    p_det = sub.add_parser("detect", help="run the full detection pipeline")
    p_det.add_argument("dataset")
    p_det.add_argument("--out", required=True)
    p_det.add_argument("--backend", default="reference",
                       help="'reference' or a detector worker command line")
    p_det.add_argument("--templates", default=None)
    p_det.add_argument("--baseline", action="store_true",
                       help="skip rectification, detect on the raw image")
    p_det.add_argument("--nms-iou", type=float, default=0.5)
    p_det.add_argument("--ncc-threshold", type=float, default=DEFAULT_SCORE_THRESHOLD)
    _add_pipeline_flags(p_det)
    p_det.set_defaults(func=cmd_detect)

    p_eval = sub.add_parser("eval", help="score detections against a dataset")
    p_eval.add_argument("detections")
    p_eval.add_argument("dataset")
    p_eval.add_argument("--out", default=None, help="also save the report as JSON")
    p_eval.set_defaults(func=cmd_eval)

    p_synth = sub.add_parser("synth", help="generate a synthetic dataset")
    p_synth.add_argument("--out", required=True)
    p_synth.add_argument("--angles", type=float, nargs="+", default=list(DEFAULT_ANGLES))
    p_synth.add_argument("--distances", type=float, nargs="+", default=list(DEFAULT_DISTANCES))
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--outlier-fraction", type=float, default=0.0)
    p_synth.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except RectidetError as exc:
        print(f"error: {exc.__class__.__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
