"""Shared fixtures and geometry helpers for the test suite."""

import numpy as np
import pytest

from rectidet.geometry import CameraIntrinsics, Homography
from rectidet.planes import PlaneModel, PointCloud
from rectidet.rectify import RectifiedTile, TileSpec
from rectidet.synth import sweep


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform random rotation matrix from a normalized random quaternion."""
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def rotation_about(axis, deg: float) -> np.ndarray:
    """Rodrigues rotation by ``deg`` degrees about a (not necessarily unit) axis."""
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    a = np.radians(deg)
    kx, ky, kz = axis
    k = np.array([[0, -kz, ky], [kz, 0, -kx], [-ky, kx, 0]])
    return np.eye(3) + np.sin(a) * k + (1 - np.cos(a)) * (k @ k)


def frobenius_gap(a, b) -> float:
    """Scale/sign-invariant distance between homographies (or 3x3 arrays)."""
    ma = a.matrix if isinstance(a, Homography) else np.asarray(a, dtype=float)
    mb = b.matrix if isinstance(b, Homography) else np.asarray(b, dtype=float)
    ma = ma / np.linalg.norm(ma)
    mb = mb / np.linalg.norm(mb)
    return float(min(np.linalg.norm(ma - mb), np.linalg.norm(ma + mb)))


def plane_basis(normal: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Some orthonormal in-plane pair (u, v) for a unit normal."""
    seed = np.array([1.0, 0.0, 0.0])
    if abs(np.dot(seed, normal)) > 0.9:
        seed = np.array([0.0, 1.0, 0.0])
    u = seed - np.dot(seed, normal) * normal
    u /= np.linalg.norm(u)
    return u, np.cross(normal, u)


def make_plane_model(normal, centroid, half: float = 0.5) -> PlaneModel:
    """PlaneModel with a square boundary of side 2*half centered on the centroid.

    The normal must already satisfy the orientation rule centroid . normal > 0.
    """
    normal = np.asarray(normal, dtype=float)
    centroid = np.asarray(centroid, dtype=float)
    u, v = plane_basis(normal)
    boundary = np.array(
        [centroid + su * half * u + sv * half * v
         for su, sv in ((-1, -1), (1, -1), (1, 1), (-1, 1))]
    )
    return PlaneModel(
        normal=normal,
        distance=float(np.dot(normal, centroid)),
        centroid=centroid,
        boundary=boundary,
        inlier_indices=np.arange(4),
    )


def plane_cloud(
    rng: np.random.Generator,
    normal,
    point_on_plane,
    n_points: int = 5000,
    extent: float = 1.0,
    depth_sigma: float = 0.0,
    outlier_fraction: float = 0.0,
) -> PointCloud:
    """Organized cloud of a plane patch with optional depth noise and outliers.

    Points are sampled on a square patch around ``point_on_plane``; noise
    perturbs the z coordinate (depth-sensor style); outliers are replaced by
    uniform points in a 2 m box in front of the camera.
    """
    normal = np.asarray(normal, dtype=float)
    p0 = np.asarray(point_on_plane, dtype=float)
    u, v = plane_basis(normal)
    ab = rng.uniform(-extent, extent, size=(n_points, 2))
    pts = p0 + ab[:, :1] * u + ab[:, 1:] * v
    if depth_sigma > 0:
        pts[:, 2] += rng.normal(scale=depth_sigma, size=n_points)
    n_out = int(round(outlier_fraction * n_points))
    if n_out:
        idx = rng.choice(n_points, size=n_out, replace=False)
        pts[idx] = rng.uniform([-1.5, -1.5, 0.3], [1.5, 1.5, 3.0], size=(n_out, 3))
    return PointCloud(points=pts, valid=np.ones(n_points, dtype=bool),
                      width=n_points, height=1)


def whole_image_tile(rgb: np.ndarray) -> RectifiedTile:
    """Wrap a raw image as a single all-valid tile with identity homography."""
    spec = TileSpec(
        indices=(1, 1),
        homography=Homography.identity(),
        out_height=rgb.shape[0],
        out_width=rgb.shape[1],
    )
    return RectifiedTile(image=rgb, mask=np.ones(rgb.shape[:2], dtype=bool), spec=spec)


@pytest.fixture
def k_default() -> CameraIntrinsics:
    return CameraIntrinsics(fx=600.0, fy=600.0, cx=640.0, cy=360.0,
                            width=1280, height=720)


@pytest.fixture(scope="session")
def mini_dataset(tmp_path_factory) -> str:
    """Two-frame synthetic dataset (yaw 0 and 60 deg at 1.5 m, default noise)."""
    root = tmp_path_factory.mktemp("mini_dataset")
    sweep(root, angles=(0.0, 60.0), distances=(1.5,), seed=11)
    return str(root)


@pytest.fixture(scope="session")
def default_sweep(tmp_path_factory) -> str:
    """The full default 9-angle x 3-distance sweep (27 frames), seed 0."""
    root = tmp_path_factory.mktemp("default_sweep")
    sweep(root, seed=0)
    return str(root)


def closed_loop_mae(scene_spec, rect, tile) -> float:
    """Photometric consistency of one rectified tile against a direct render.

    The scene is re-rendered straight from the tile's estimated virtual
    camera (the analytic ray caster at the estimated pose, principal point
    shifted by the tile offset). If the estimated homography is right, the
    warped tile must look like that render wherever both are valid; the
    comparison region is eroded so board-edge interpolation does not count.
    """
    from scipy.ndimage import binary_erosion

    from rectidet.synth import render_view

    k = scene_spec.intrinsics
    delta = (tile.spec.homography @ rect.base_homography.inverse()).matrix
    # tile homography = base followed by a pure pixel translation
    assert np.allclose(delta[:2, :2], np.eye(2), atol=1e-9)
    assert np.allclose(delta[2, :2], 0.0, atol=1e-12)
    tx, ty = delta[0, 2], delta[1, 2]
    direct, onboard = render_view(
        scene_spec, rect.viewpoint.pose, k.fx, k.fy, k.cx + tx, k.cy + ty,
        tile.spec.out_width, tile.spec.out_height)
    region = binary_erosion(tile.mask & onboard, iterations=2)
    assert region.sum() > 1000, "tile and direct render barely overlap"
    diff = np.abs(tile.image.astype(float) - direct.astype(float))
    return float(diff[region].mean())
