"""Pluggable detector backends.

A backend consumes rectified tiles and produces detections in tile pixel
space. ReferenceBackend runs the built-in template matcher in-process;
SubprocessBackend speaks a JSON-lines protocol over a child's stdio:

  child -> parent   {"type": "hello", "protocol": 1, "capacity": N,
                     "classes": [..]}          (first line after spawn)
  parent -> child   {"type": "detect", "id": I, "image_path": P,
                     "width": W, "height": H}
  child -> parent   {"type": "result", "id": I, "detections":
                     [{"class_id": C, "score": S, "bbox": [x, y, w, h]}, ..]}
  parent -> child   {"type": "bye"}            (then the child exits)

Unknown fields are ignored for forward compatibility; unknown record types,
malformed JSON, or mismatched ids are protocol violations.
"""

from __future__ import annotations

import json
import queue
import subprocess
import tempfile
import threading
from pathlib import Path

from .detect import DEFAULT_SCORE_THRESHOLD, Detection, reference_detect
from .errors import BackendUnavailable, ProtocolViolation, Timeout
from .rectify import RectifiedTile

PROTOCOL_VERSION = 1
DEFAULT_TIMEOUT = 30.0


class ReferenceBackend:
    """In-process single-scale template matcher."""

    def __init__(self, templates, threshold: float = DEFAULT_SCORE_THRESHOLD):
        self.templates = list(templates)
        self.threshold = float(threshold)
        self.capacity = 1
        self.classes = sorted(cid for cid, _ in self.templates)

    def detect(self, tile: RectifiedTile) -> list[Detection]:
        return reference_detect(tile, self.templates, self.threshold)

    def close(self):
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _parse_detection(raw: dict, width: int, height: int) -> Detection | None:
    """Validate and clamp one detection record; None if clamped away."""
    try:
        class_id = int(raw["class_id"])
        score = float(raw["score"])
        x, y, w, h = (float(v) for v in raw["bbox"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ProtocolViolation(f"malformed detection record: {raw!r}") from exc
    if not (0.0 <= score <= 1.0):
        raise ProtocolViolation(f"score {score} outside [0, 1]")
    x0 = min(max(x, 0.0), float(width))
    y0 = min(max(y, 0.0), float(height))
    x1 = min(max(x + w, 0.0), float(width))
    y1 = min(max(y + h, 0.0), float(height))
    if x1 - x0 <= 0 or y1 - y0 <= 0:
        return None
    return Detection(class_id=class_id, score=score, bbox=(x0, y0, x1 - x0, y1 - y0),
                     frame_space="tile")


class SubprocessBackend:
    """Detector child process driven over stdin/stdout JSON lines.

    Tiles are written as PNG files into a scratch directory; the child reads
    them by path. Requests are issued serially regardless of the advertised
    capacity. A reader thread decouples blocking reads so responses can be
    awaited with a timeout.
    """

    def __init__(self, command, workdir: str | Path | None = None,
                 timeout: float = DEFAULT_TIMEOUT):
        if isinstance(command, str):
            import shlex

            command = shlex.split(command)
        self.timeout = float(timeout)
        self._tmp = None
        if workdir is None:
            self._tmp = tempfile.TemporaryDirectory(prefix="rectidet_backend_")
            workdir = self._tmp.name
        self.workdir = Path(workdir)
        self.workdir.mkdir(parents=True, exist_ok=True)
        self._next_id = 0
        self._closed = False
        try:
            self._proc = subprocess.Popen(
                command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise BackendUnavailable(f"failed to spawn {command!r}: {exc}") from exc
        self._lines: queue.Queue = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()
        hello = self._read_record()
        if hello.get("type") != "hello":
            raise ProtocolViolation(f"expected hello, got {hello.get('type')!r}")
        if hello.get("protocol") != PROTOCOL_VERSION:
            raise ProtocolViolation(f"unsupported protocol {hello.get('protocol')!r}")
        try:
            self.capacity = max(1, int(hello["capacity"]))
            self.classes = [int(c) for c in hello["classes"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolViolation(f"malformed hello: {hello!r}") from exc

    def _pump(self):
        for line in self._proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def _read_record(self) -> dict:
        try:
            line = self._lines.get(timeout=self.timeout)
        except queue.Empty:
            raise Timeout(f"no response within {self.timeout:.0f} s") from None
        if line is None:
            raise BackendUnavailable("backend closed its stdout")
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProtocolViolation(f"not JSON: {line!r}") from exc
        if not isinstance(record, dict):
            raise ProtocolViolation(f"expected object, got {line!r}")
        return record

    def _send(self, record: dict):
        if self._proc.poll() is not None:
            raise BackendUnavailable("backend process has exited")
        try:
            self._proc.stdin.write(json.dumps(record) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise BackendUnavailable(f"backend pipe closed: {exc}") from exc

    def detect(self, tile: RectifiedTile) -> list[Detection]:
        from .dataset import save_rgb

        self._next_id += 1
        req_id = self._next_id
        height, width = tile.image.shape[:2]
        path = self.workdir / f"req_{req_id:06d}.png"
        save_rgb(path, tile.image)
        self._send(
            {
                "type": "detect",
                "id": req_id,
                "image_path": str(path),
                "width": width,
                "height": height,
            }
        )
        record = self._read_record()
        if record.get("type") != "result":
            raise ProtocolViolation(f"expected result, got {record.get('type')!r}")
        if record.get("id") != req_id:
            raise ProtocolViolation(
                f"response id {record.get('id')!r} does not match request {req_id}"
            )
        raw = record.get("detections")
        if not isinstance(raw, list):
            raise ProtocolViolation("result without detections list")
        dets = []
        for item in raw:
            det = _parse_detection(item, width, height)
            if det is not None:
                dets.append(det)
        path.unlink(missing_ok=True)
        return dets

    def close(self):
        if self._closed:
            return
        self._closed = True
        if self._proc.poll() is None:
            try:
                self._send({"type": "bye"})
            except BackendUnavailable:
                pass
            try:
                self._proc.wait(timeout=5.0)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()
        if self._proc.stdin:
            self._proc.stdin.close()
        if self._tmp is not None:
            self._tmp.cleanup()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def open_backend(spec: str, templates=None, threshold: float = DEFAULT_SCORE_THRESHOLD,
                 timeout: float = DEFAULT_TIMEOUT):
    """Build a backend from a CLI-style spec: "reference" or a command line."""
    if spec == "reference":
        if not templates:
            raise BackendUnavailable("reference backend requires templates")
        return ReferenceBackend(templates, threshold)
    return SubprocessBackend(spec, timeout=timeout)
