"""Reference detector served over the subprocess JSON-lines protocol.

Run as `python -m rectidet.worker --templates DIR [--threshold T]`. Emits the
hello line on startup, answers detect requests until a bye record or EOF.
Exists both as the out-of-process twin of ReferenceBackend and as a protocol
conformance fixture.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .detect import DEFAULT_SCORE_THRESHOLD, load_templates, reference_detect
from .geometry import Homography
from .rectify import RectifiedTile, TileSpec


def _tile_from_png(path: str) -> RectifiedTile:
    from .dataset import load_rgb

    image = load_rgb(path)
    spec = TileSpec(
        indices=(1, 1),
        homography=Homography.identity(),
        out_height=image.shape[0],
        out_width=image.shape[1],
    )
    return RectifiedTile(image=image, mask=np.ones(image.shape[:2], dtype=bool), spec=spec)


def serve(templates, threshold: float, stdin=None, stdout=None) -> int:
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout

    def emit(record: dict):
        stdout.write(json.dumps(record) + "\n")
        stdout.flush()

    emit(
        {
            "type": "hello",
            "protocol": 1,
            "capacity": 1,
            "classes": sorted(cid for cid, _ in templates),
        }
    )
    for line in stdin:
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError:
            return 1
        kind = record.get("type")
        if kind == "bye":
            return 0
        if kind != "detect":
            return 1
        tile = _tile_from_png(record["image_path"])
        dets = reference_detect(tile, templates, threshold)
        emit(
            {
                "type": "result",
                "id": record.get("id"),
                "detections": [
                    {"class_id": d.class_id, "score": d.score, "bbox": list(d.bbox)}
                    for d in dets
                ],
            }
        )
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="template-matching detector worker")
    parser.add_argument("--templates", required=True, help="directory of class_<id>.png files")
    parser.add_argument("--threshold", type=float, default=DEFAULT_SCORE_THRESHOLD)
    args = parser.parse_args(argv)
    templates = load_templates(args.templates)
    if not templates:
        print(f"no templates found in {args.templates}", file=sys.stderr)
        return 2
    return serve(templates, args.threshold)


if __name__ == "__main__":
    raise SystemExit(main())
