"""Raster and JSON round trips, depth validity rules, cloud back-projection.

Depth convention: 16-bit PNG in millimeters, 0 = invalid, and anything at or
beyond 10 m is zeroed on load (sensor max range). JSON files are written with
sorted keys so identical content is byte-identical on disk.
"""

import json

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from rectidet.dataset import (
    MAX_DEPTH_MM,
    depth_to_cloud,
    load_annotations,
    load_dataset,
    load_depth,
    load_detections,
    load_frame,
    load_intrinsics,
    load_rgb,
    save_annotations,
    save_depth,
    save_detections,
    save_intrinsics,
    save_rgb,
)
from rectidet.detect import Detection
from rectidet.errors import (
    DimensionMismatch,
    FileMissing,
    MalformedIntrinsics,
    ParseError,
)
from rectidet.evaluation import GroundTruthFrame
from rectidet.geometry import CameraIntrinsics

K = CameraIntrinsics(fx=600.0, fy=600.0, cx=640.0, cy=360.0, width=1280, height=720)


class TestRgbRoundTrip:
    def test_exact(self, tmp_path):
        rng = np.random.default_rng(80)
        img = rng.integers(0, 256, size=(20, 30, 3), dtype=np.uint8)
        save_rgb(tmp_path / "x.png", img)
        np.testing.assert_array_equal(load_rgb(tmp_path / "x.png"), img)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileMissing):
            load_rgb(tmp_path / "absent.png")


class TestDepthRoundTrip:
    def test_exact_below_max_range(self, tmp_path):
        rng = np.random.default_rng(81)
        depth = rng.integers(0, MAX_DEPTH_MM, size=(16, 24), dtype=np.uint16)
        save_depth(tmp_path / "d.png", depth)
        np.testing.assert_array_equal(load_depth(tmp_path / "d.png"), depth)

    def test_boundary_values(self, tmp_path):
        depth = np.array([[0, 1, 9999, 10000, 12000, 65535]], dtype=np.uint16)
        save_depth(tmp_path / "d.png", depth)
        loaded = load_depth(tmp_path / "d.png")
        # 9.999 m is the deepest valid sample; 10 m and beyond are invalid
        np.testing.assert_array_equal(loaded, [[0, 1, 9999, 0, 0, 0]])

    def test_file_is_16_bit(self, tmp_path):
        from PIL import Image

        save_depth(tmp_path / "d.png", np.array([[54321]], dtype=np.uint16))
        with Image.open(tmp_path / "d.png") as img:
            raw = np.asarray(img, dtype=np.uint16)
        assert raw[0, 0] == 54321  # full 16-bit value survives the container

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileMissing):
            load_depth(tmp_path / "absent.png")


class TestIntrinsics:
    def test_round_trip(self, tmp_path):
        save_intrinsics(tmp_path / "k.json", K)
        k2 = load_intrinsics(tmp_path / "k.json")
        assert (k2.fx, k2.fy, k2.cx, k2.cy) == (K.fx, K.fy, K.cx, K.cy)
        assert (k2.width, k2.height) == (K.width, K.height)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileMissing):
            load_intrinsics(tmp_path / "k.json")

    def test_missing_key(self, tmp_path):
        (tmp_path / "k.json").write_text('{"fx": 600.0}')
        with pytest.raises(MalformedIntrinsics):
            load_intrinsics(tmp_path / "k.json")

    def test_non_numeric_value(self, tmp_path):
        payload = dict(fx="wide", fy=600, cx=640, cy=360, width=1280, height=720)
        (tmp_path / "k.json").write_text(json.dumps(payload))
        with pytest.raises(MalformedIntrinsics):
            load_intrinsics(tmp_path / "k.json")

    def test_invalid_json(self, tmp_path):
        (tmp_path / "k.json").write_text("{not json")
        with pytest.raises(MalformedIntrinsics):
            load_intrinsics(tmp_path / "k.json")


class TestLoadFrame:
    def _write_pair(self, tmp_path, rgb_shape, depth_shape):
        rgb = np.zeros(rgb_shape, dtype=np.uint8)
        depth = np.full(depth_shape, 1500, dtype=np.uint16)
        save_rgb(tmp_path / "f.png", rgb)
        save_depth(tmp_path / "f_depth.png", depth)
        return tmp_path / "f.png", tmp_path / "f_depth.png"

    def test_valid_frame(self, tmp_path):
        rgb_path, depth_path = self._write_pair(tmp_path, (720, 1280, 3), (720, 1280))
        record = load_frame(rgb_path, depth_path, K, angle_deg=30.0)
        assert record.frame_id == "f"  # stem of the rgb file
        assert record.rgb.shape == (720, 1280, 3)
        assert record.depth_mm.shape == (720, 1280)
        assert record.angle_deg == 30.0

    def test_rgb_depth_mismatch(self, tmp_path):
        rgb_path, depth_path = self._write_pair(tmp_path, (720, 1280, 3), (360, 640))
        with pytest.raises(DimensionMismatch):
            load_frame(rgb_path, depth_path, K)

    def test_intrinsics_mismatch(self, tmp_path):
        rgb_path, depth_path = self._write_pair(tmp_path, (480, 640, 3), (480, 640))
        with pytest.raises(DimensionMismatch):
            load_frame(rgb_path, depth_path, K)


class TestDepthToCloud:
    def test_principal_point(self):
        depth = np.zeros((720, 1280), dtype=np.uint16)
        depth[360, 640] = 1200
        cloud = depth_to_cloud(depth, K)
        assert (cloud.width, cloud.height) == (1280, 720)
        idx = 360 * 1280 + 640
        np.testing.assert_allclose(cloud.points[idx], [0.0, 0.0, 1.2], atol=1e-12)
        assert cloud.valid[idx]
        assert cloud.valid.sum() == 1

    def test_off_axis_pixel(self):
        # pixel one focal length right of center at 1 m: x = z by similar
        # triangles, so the point is (1, 0, 1)
        depth = np.zeros((720, 1280), dtype=np.uint16)
        depth[360, 1240] = 1000
        cloud = depth_to_cloud(depth, K)
        np.testing.assert_allclose(
            cloud.points[360 * 1280 + 1240], [1.0, 0.0, 1.0], atol=1e-12
        )

    def test_zeros_are_invalid(self):
        cloud = depth_to_cloud(np.zeros((4, 6), dtype=np.uint16), K)
        assert not cloud.valid.any()
        np.testing.assert_array_equal(cloud.points, 0.0)

    def test_constant_depth_is_a_fronto_parallel_plane(self):
        depth = np.full((720, 1280), 1500, dtype=np.uint16)
        cloud = depth_to_cloud(depth, K)
        assert cloud.valid.all()
        np.testing.assert_allclose(cloud.points[:, 2], 1.5, atol=1e-12)
        # x spans the frustum at 1.5 m: (0 - 640)/600 * 1.5 .. (1279-640)/600 * 1.5
        assert cloud.points[:, 0].min() == pytest.approx(-1.6)
        assert cloud.points[:, 0].max() == pytest.approx(639 / 600 * 1.5)


class TestAnnotations:
    FRAMES = [
        GroundTruthFrame("zeta", ((2, (1.0, 2.0, 3.0, 4.5)),), angle_deg=60.0,
                         distance_m=1.5, background="flat"),
        GroundTruthFrame("alpha", ((0, (0.0, 0.0, 10.0, 10.0)),
                                   (1, (5.5, 6.5, 7.0, 8.0))), angle_deg=0.0),
    ]

    def test_round_trip_sorted_by_frame_id(self, tmp_path):
        save_annotations(tmp_path / "a.json", self.FRAMES)
        loaded = load_annotations(tmp_path / "a.json")
        assert [f.frame_id for f in loaded] == ["alpha", "zeta"]
        assert loaded == sorted(self.FRAMES, key=lambda f: f.frame_id)

    def test_empty_round_trip(self, tmp_path):
        save_annotations(tmp_path / "a.json", [])
        assert load_annotations(tmp_path / "a.json") == []

    def test_byte_identical_rewrites(self, tmp_path):
        save_annotations(tmp_path / "a.json", self.FRAMES)
        save_annotations(tmp_path / "b.json", list(reversed(self.FRAMES)))
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    def test_invalid_json(self, tmp_path):
        (tmp_path / "a.json").write_text("[")
        with pytest.raises(ParseError):
            load_annotations(tmp_path / "a.json")

    def test_frame_missing_key(self, tmp_path):
        (tmp_path / "a.json").write_text(json.dumps({"frames": [{"frame_id": "x"}]}))
        with pytest.raises(ParseError):
            load_annotations(tmp_path / "a.json")

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileMissing):
            load_annotations(tmp_path / "a.json")


class TestDetections:
    def test_round_trip(self, tmp_path):
        dets = {
            "f1": [
                Detection(class_id=3, score=0.875, bbox=(1.5, 2.25, 30.0, 40.0)),
                Detection(class_id=0, score=0.5, bbox=(0.0, 0.0, 1.0, 1.0),
                          frame_space="tile:p0:i1:j2"),
            ],
            "f0": [],
        }
        save_detections(tmp_path / "d.json", dets)
        loaded = load_detections(tmp_path / "d.json")
        assert loaded == dets

    def test_byte_identical_rewrites(self, tmp_path):
        a = {"x": [Detection(class_id=1, score=0.5, bbox=(1, 2, 3, 4))], "y": []}
        b = {"y": [], "x": [Detection(class_id=1, score=0.5, bbox=(1, 2, 3, 4))]}
        save_detections(tmp_path / "a.json", a)
        save_detections(tmp_path / "b.json", b)
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    def test_malformed(self, tmp_path):
        (tmp_path / "d.json").write_text('{"frames": {"f": [{"score": 1.0}]}}')
        with pytest.raises(ParseError):
            load_detections(tmp_path / "d.json")

    @settings(max_examples=25, deadline=None,
              suppress_health_check=[HealthCheck.function_scoped_fixture])
    @given(
        dets=st.lists(
            st.builds(
                Detection,
                class_id=st.integers(0, 999),
                score=st.floats(0.0, 1.0, allow_nan=False),
                bbox=st.tuples(*[st.floats(-1e6, 1e6, allow_nan=False)] * 4),
            ),
            max_size=6,
        )
    )
    def test_any_finite_detection_survives_json(self, tmp_path, dets):
        # JSON float serialization uses repr, which is lossless for doubles
        save_detections(tmp_path / "h.json", {"frame": dets})
        assert load_detections(tmp_path / "h.json") == {"frame": dets}


class TestLoadDataset:
    def test_sweep_output_loads(self, mini_dataset):
        ds = load_dataset(mini_dataset)
        assert (ds.intrinsics.width, ds.intrinsics.height) == (1280, 720)
        assert len(ds.frames) == 2
        record = ds.load_frame(ds.frames[0].frame_id)
        assert record.rgb.shape == (720, 1280, 3)
        assert record.depth_mm.shape == (720, 1280)
        assert record.angle_deg == ds.frames[0].angle_deg

    def test_missing_root(self, tmp_path):
        with pytest.raises(FileMissing):
            load_dataset(tmp_path / "nowhere")
