"""Pinhole projection, rigid transforms, and homography estimation.

Conventions used throughout the package:

* Camera frame: x right, y down, z forward (optical axis). Units: meters.
* Pixel coordinates: (u, v) with u along image columns, v along rows,
  origin at the top-left pixel center.
* A ``RigidTransform`` (R, t) maps points as ``X' = R @ X + t``. When it is
  used as a *pose* (frame B expressed in frame A) it maps B-frame
  coordinates into the A frame.
* A ``Homography`` maps source pixels to destination pixels:
  ``dst ~ H @ (u, v, 1)``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateConfiguration,
    DegeneratePlane,
    NonPositiveDepth,
    PointAtInfinity,
    RankDeficient,
    SingularHomography,
)

DEPTH_EPS = 1e-9
HOMOGENEOUS_EPS = 1e-12
DET_EPS = 1e-9
COLLINEAR_EPS = 1e-6
SINGULAR_GAP_EPS = 1e-10


@dataclass(frozen=True, eq=False)
class CameraIntrinsics:
    """Pinhole intrinsics; focal lengths and principal point in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 < self.cx < self.width) or not (0 < self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    @property
    def matrix(self) -> np.ndarray:
        """3x3 projection matrix K."""
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    @property
    def inverse_matrix(self) -> np.ndarray:
        return np.array(
            [
                [1.0 / self.fx, 0.0, -self.cx / self.fx],
                [0.0, 1.0 / self.fy, -self.cy / self.fy],
                [0.0, 0.0, 1.0],
            ]
        )


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Rotation + translation acting as ``X' = R @ X + t``."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.array(self.rotation, dtype=float)
        t = np.array(self.translation, dtype=float).reshape(3)
        if r.shape != (3, 3):
            raise ValueError("rotation must be 3x3")
        if np.linalg.norm(r.T @ r - np.eye(3)) >= 1e-9 or np.linalg.det(r) < 0:
            raise ValueError("rotation must be orthonormal with det +1")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(np.eye(3), np.zeros(3))

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """Return the transform applying ``other`` first, then ``self``."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return self.compose(other)

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform one (3,) point or an (N, 3) batch."""
        p = np.asarray(points, dtype=float)
        return p @ self.rotation.T + self.translation


def _normalize_matrix(m: np.ndarray) -> np.ndarray:
    # Convention: bottom-right entry 1 when usable, else unit Frobenius norm
    # with the first nonzero entry positive (deterministic sign).
    if abs(m[2, 2]) > HOMOGENEOUS_EPS:
        return m / m[2, 2]
    m = m / np.linalg.norm(m)
    flat = m.reshape(-1)
    nz = np.nonzero(np.abs(flat) > HOMOGENEOUS_EPS)[0]
    if nz.size and flat[nz[0]] < 0:
        m = -m
    return m


@dataclass(frozen=True, eq=False)
class Homography:
    """3x3 projective pixel map, stored in normalized form."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.shape != (3, 3) or not np.all(np.isfinite(m)):
            raise ValueError("homography must be a finite 3x3 matrix")
        m = _normalize_matrix(m)
        if abs(np.linalg.det(m)) < DET_EPS:
            raise SingularHomography(
                f"|det H| = {abs(np.linalg.det(m)):.3e} below threshold {DET_EPS}"
            )
        object.__setattr__(self, "matrix", m)

    @staticmethod
    def identity() -> "Homography":
        return Homography(np.eye(3))

    @staticmethod
    def translation(tx: float, ty: float) -> "Homography":
        return Homography(np.array([[1.0, 0.0, tx], [0.0, 1.0, ty], [0.0, 0.0, 1.0]]))

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.matrix))

    def compose(self, other: "Homography") -> "Homography":
        """Return the map applying ``other`` first, then ``self``."""
        return Homography(self.matrix @ other.matrix)

    def __matmul__(self, other: "Homography") -> "Homography":
        return self.compose(other)


def project(k: CameraIntrinsics, points: np.ndarray) -> np.ndarray:
    """Project camera-frame 3D points to pixels; (3,) -> (2,) or (N,3) -> (N,2).

    No clamping to the image bounds; callers clip where needed.
    """
    p = np.asarray(points, dtype=float)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    z = p[:, 2]
    if np.any(z <= DEPTH_EPS):
        raise NonPositiveDepth(f"min depth {z.min():.4g} m")
    px = np.stack([k.fx * p[:, 0] / z + k.cx, k.fy * p[:, 1] / z + k.cy], axis=-1)
    return px[0] if single else px


def unproject(k: CameraIntrinsics, pixels: np.ndarray, depth) -> np.ndarray:
    """Lift pixels to 3D camera-frame points at the given depth (meters)."""
    px = np.asarray(pixels, dtype=float)
    single = px.ndim == 1
    px = np.atleast_2d(px)
    z = np.broadcast_to(np.asarray(depth, dtype=float), px.shape[:1])
    if np.any(z <= DEPTH_EPS):
        raise NonPositiveDepth(f"min depth {z.min():.4g} m")
    pts = np.stack(
        [(px[:, 0] - k.cx) / k.fx * z, (px[:, 1] - k.cy) / k.fy * z, z], axis=-1
    )
    return pts[0] if single else pts


def apply_homography(h: Homography, pixels: np.ndarray) -> np.ndarray:
    """Map pixels through ``h`` with perspective division; (2,) or (N,2)."""
    px = np.asarray(pixels, dtype=float)
    single = px.ndim == 1
    px = np.atleast_2d(px)
    hom = np.concatenate([px, np.ones((px.shape[0], 1))], axis=1)
    mapped = hom @ h.matrix.T
    w = mapped[:, 2]
    if np.any(np.abs(w) <= HOMOGENEOUS_EPS):
        raise PointAtInfinity("mapped point has vanishing homogeneous coordinate")
    out = mapped[:, :2] / w[:, None]
    return out[0] if single else out


def _hartley_normalization(pts: np.ndarray) -> np.ndarray:
    """Similarity moving the centroid to the origin, mean distance sqrt(2)."""
    centroid = pts.mean(axis=0)
    mean_dist = np.linalg.norm(pts - centroid, axis=1).mean()
    if mean_dist < 1e-12:
        raise DegenerateConfiguration("all points coincide")
    s = np.sqrt(2.0) / mean_dist
    return np.array(
        [[s, 0.0, -s * centroid[0]], [0.0, s, -s * centroid[1]], [0.0, 0.0, 1.0]]
    )


def _check_degenerate_sources(src: np.ndarray):
    n = len(src)
    diffs = src[:, None, :] - src[None, :, :]
    dist2 = np.einsum("ijk,ijk->ij", diffs, diffs)
    np.fill_diagonal(dist2, np.inf)
    if dist2.min() < 1e-12:
        raise DegenerateConfiguration("duplicate source points")
    # Exhaustive triple screen is only affordable for small sets; large
    # least-squares problems are guarded by the singular-gap check instead.
    if n > 60:
        return
    triples = np.array(list(itertools.combinations(range(n), 3)))
    a, b, c = src[triples[:, 0]], src[triples[:, 1]], src[triples[:, 2]]
    det = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (
        c[:, 0] - a[:, 0]
    )
    if np.any(np.abs(det) < COLLINEAR_EPS):
        raise DegenerateConfiguration("three source points are collinear")


def dlt_homography(src: np.ndarray, dst: np.ndarray) -> Homography:
    """Least-squares homography from >= 4 pixel correspondences (DLT).

    Points are Hartley-normalized before solving (centroid at the origin,
    mean distance sqrt(2)); the solution is the smallest-singular-vector of
    the 2n x 9 design matrix with a deterministic sign.
    """
    src = np.asarray(src, dtype=float).reshape(-1, 2)
    dst = np.asarray(dst, dtype=float).reshape(-1, 2)
    if len(src) != len(dst) or len(src) < 4:
        raise ValueError("need >= 4 matched correspondences")
    _check_degenerate_sources(src)

    t1 = _hartley_normalization(src)
    t2 = _hartley_normalization(dst)
    sh = np.concatenate([src, np.ones((len(src), 1))], axis=1) @ t1.T
    dh = np.concatenate([dst, np.ones((len(dst), 1))], axis=1) @ t2.T
    x, y = sh[:, 0], sh[:, 1]
    xp, yp = dh[:, 0], dh[:, 1]

    n = len(src)
    a = np.zeros((2 * n, 9))
    a[0::2, 0] = x
    a[0::2, 1] = y
    a[0::2, 2] = 1.0
    a[0::2, 6] = -xp * x
    a[0::2, 7] = -xp * y
    a[0::2, 8] = -xp
    a[1::2, 3] = x
    a[1::2, 4] = y
    a[1::2, 5] = 1.0
    a[1::2, 6] = -yp * x
    a[1::2, 7] = -yp * y
    a[1::2, 8] = -yp

    _, sv, vt = np.linalg.svd(a)
    # The design matrix has 9 columns; with the minimal 4 correspondences it
    # has only 8 rows and the ninth singular value is a structural zero, so
    # the uniqueness gap is the smallest returned value itself.
    gap = sv[-2] - sv[-1] if len(sv) == 9 else sv[-1]
    if gap < SINGULAR_GAP_EPS:
        raise RankDeficient(
            f"singular gap {gap:.3e} leaves the null direction ambiguous"
        )
    h = vt[-1]
    nz = np.nonzero(np.abs(h) > HOMOGENEOUS_EPS)[0]
    if nz.size and h[nz[0]] < 0:
        h = -h
    return Homography(np.linalg.inv(t2) @ h.reshape(3, 3) @ t1)


def closed_form_homography(
    k1: CameraIntrinsics,
    k2: CameraIntrinsics,
    rel: RigidTransform,
    normal: np.ndarray,
    distance: float,
) -> Homography:
    """Planar homography H = K2 (R - t n^T / d) K1^-1 from pose and plane.

    ``rel`` maps frame-1 coordinates into frame 2 (``X2 = R @ X1 + t``). The
    plane is given in frame 1 in the Hartley-Zisserman convention: points X
    on it satisfy ``n . X + d = 0`` with d > 0, i.e. the normal faces the
    frame-1 origin. A plane oriented away from the origin (``n . X = d``)
    enters with its normal negated.
    """
    if distance < DEPTH_EPS:
        raise DegeneratePlane(f"plane distance {distance:.3e} m")
    n = np.asarray(normal, dtype=float).reshape(3)
    t = rel.translation.reshape(3, 1)
    core = rel.rotation - t @ n.reshape(1, 3) / distance
    return Homography(k2.matrix @ core @ k1.inverse_matrix)
