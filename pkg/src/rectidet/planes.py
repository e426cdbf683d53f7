"""Dominant-plane extraction from organized point clouds.

RANSAC hypothesis search with a total-least-squares refit, unique normal
orientation (normal never faces the camera origin), ground-plane filtering,
and convex-hull boundary extraction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateCentroid,
    DegenerateHull,
    InsufficientPoints,
    NoConsensus,
)

# Hypotheses are scored against at most this many points; the consensus set
# and refit always use the full cloud.
SCORING_SUBSET = 20000
_HYPOTHESIS_CHUNK = 256


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Organized cloud: one point per pixel, row-major, zeros where invalid."""

    points: np.ndarray
    valid: np.ndarray
    width: int
    height: int

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        valid = np.asarray(self.valid, dtype=bool).reshape(-1)
        if len(pts) != self.width * self.height or len(valid) != len(pts):
            raise ValueError("cloud must have width*height entries")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "valid", valid)

    @property
    def valid_count(self) -> int:
        return int(self.valid.sum())


@dataclass(frozen=True, eq=False)
class PlaneModel:
    """Plane n.X = d with d > 0 and the normal oriented away from the origin."""

    normal: np.ndarray
    distance: float
    centroid: np.ndarray
    boundary: np.ndarray
    inlier_indices: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float).reshape(3)
        if abs(np.linalg.norm(n) - 1.0) > 1e-9:
            raise ValueError("plane normal must be unit length")
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "centroid", np.asarray(self.centroid, dtype=float).reshape(3))
        object.__setattr__(self, "boundary", np.asarray(self.boundary, dtype=float).reshape(-1, 3))
        object.__setattr__(
            self, "inlier_indices", np.asarray(self.inlier_indices, dtype=np.intp).reshape(-1)
        )

    @property
    def inlier_count(self) -> int:
        return int(len(self.inlier_indices))


@dataclass(frozen=True)
class SegmentationConfig:
    inlier_threshold: float = 0.02
    max_iterations: int = 1000
    min_inlier_fraction: float = 0.15
    stop_fraction: float = 0.10
    max_planes: int = 1
    ground_filter_enabled: bool = True
    ground_axis: tuple = (0.0, -1.0, 0.0)
    ground_angle_threshold: float = 30.0
    rng_seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.stop_fraction < 1.0):
            raise ValueError("stop_fraction must be in (0, 1)")
        if self.max_planes < 1:
            raise ValueError("max_planes must be >= 1")
        if self.inlier_threshold <= 0:
            raise ValueError("inlier_threshold must be positive")


def unique_normal(normal: np.ndarray, centroid: np.ndarray) -> np.ndarray:
    """Orient a plane normal so that centroid . normal > 0."""
    normal = np.asarray(normal, dtype=float)
    dot = float(np.dot(centroid, normal))
    if abs(dot) < 1e-12:
        raise DegenerateCentroid("plane passes through the origin; no unique side")
    return normal if dot > 0 else -normal


def is_ground(plane: PlaneModel, cfg: SegmentationConfig) -> bool:
    """True when the normal is within the angle threshold of +/- ground axis."""
    axis = np.asarray(cfg.ground_axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    cosang = abs(float(np.dot(plane.normal, axis)))
    angle = np.degrees(np.arccos(np.clip(cosang, -1.0, 1.0)))
    return bool(angle < cfg.ground_angle_threshold)


def _in_plane_basis(normal: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # Seed with the world axis least aligned with the normal for stability.
    seed = np.zeros(3)
    seed[int(np.argmin(np.abs(normal)))] = 1.0
    u = seed - np.dot(seed, normal) * normal
    u /= np.linalg.norm(u)
    v = np.cross(normal, u)
    return u, v


def _monotone_chain(pts2d: np.ndarray) -> np.ndarray:
    """Indices of the convex hull of 2D points in counter-clockwise order."""
    order = np.lexsort((pts2d[:, 1], pts2d[:, 0]))

    def half(indices):
        chain: list[int] = []
        for idx in indices:
            while len(chain) >= 2:
                o, a = pts2d[chain[-2]], pts2d[chain[-1]]
                b = pts2d[idx]
                cross = (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
                if cross <= 0:  # clockwise or collinear: drop middle point
                    chain.pop()
                else:
                    break
            chain.append(idx)
        return chain

    lower = half(order)
    upper = half(order[::-1])
    hull = lower[:-1] + upper[:-1]
    if len(hull) < 3:
        raise DegenerateHull("inliers are collinear in-plane")
    return np.array(hull, dtype=np.intp)


def boundary_points(plane: PlaneModel, cloud: PointCloud) -> np.ndarray:
    """Convex-hull boundary of the plane inliers as ordered 3D points.

    Inliers are projected onto the plane; the hull is counter-clockwise when
    viewed along the negated normal.
    """
    if plane.inlier_count < 3:
        raise InsufficientPoints("need >= 3 inliers for a boundary")
    pts = cloud.points[plane.inlier_indices]
    return _hull_on_plane(pts, plane.normal, plane.centroid)


def _hull_on_plane(points: np.ndarray, normal: np.ndarray, centroid: np.ndarray) -> np.ndarray:
    offsets = points - centroid
    offsets = offsets - np.outer(offsets @ normal, normal)
    u, v = _in_plane_basis(normal)
    coords = np.stack([offsets @ u, offsets @ v], axis=1)
    hull_idx = _monotone_chain(coords)
    return centroid + offsets[hull_idx]


def _plane_distances(points: np.ndarray, normal: np.ndarray, d: float) -> np.ndarray:
    return np.abs(points @ normal - d)


def _tls_fit(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Total-least-squares plane through points: (centroid, unit normal)."""
    centroid = points.mean(axis=0)
    centered = points - centroid
    cov = centered.T @ centered
    _, vecs = np.linalg.eigh(cov)
    normal = vecs[:, 0]
    return centroid, normal / np.linalg.norm(normal)


def ransac_plane(
    cloud: PointCloud,
    cfg: SegmentationConfig,
    rng: np.random.Generator | None = None,
    candidates: np.ndarray | None = None,
) -> PlaneModel:
    """Fit the dominant plane among the candidate (default: all valid) points.

    The winning hypothesis is refit by total least squares on its consensus
    set and the returned inliers are recomputed against the refit plane, so
    every inlier satisfies |n.X - d| < inlier_threshold.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.rng_seed)
    if candidates is None:
        candidates = np.flatnonzero(cloud.valid)
    candidates = np.asarray(candidates, dtype=np.intp)
    n_cand = len(candidates)
    if n_cand < 3:
        raise InsufficientPoints(f"{n_cand} valid points")
    pts = cloud.points[candidates]

    if n_cand > SCORING_SUBSET:
        score_pts = pts[rng.choice(n_cand, SCORING_SUBSET, replace=False)]
    else:
        score_pts = pts

    # Batched minimal samples; degenerate (collinear/duplicate) triples score 0.
    sample_idx = rng.integers(0, n_cand, size=(cfg.max_iterations, 3))
    p1 = pts[sample_idx[:, 0]]
    normals = np.cross(pts[sample_idx[:, 1]] - p1, pts[sample_idx[:, 2]] - p1)
    norms = np.linalg.norm(normals, axis=1)
    ok = norms > 1e-12
    if not np.any(ok):
        raise NoConsensus("no non-degenerate minimal sample")
    normals = normals[ok] / norms[ok, None]
    ds = np.einsum("ij,ij->i", normals, p1[ok])

    best_count = -1
    best = 0
    for start in range(0, len(normals), _HYPOTHESIS_CHUNK):
        chunk = slice(start, start + _HYPOTHESIS_CHUNK)
        dist = np.abs(score_pts @ normals[chunk].T - ds[chunk])
        counts = (dist < cfg.inlier_threshold).sum(axis=0)
        k = int(np.argmax(counts))
        if counts[k] > best_count:
            best_count = int(counts[k])
            best = start + k

    consensus = _plane_distances(pts, normals[best], ds[best]) < cfg.inlier_threshold
    if consensus.sum() < max(3, cfg.min_inlier_fraction * n_cand):
        raise NoConsensus(
            f"best inlier fraction {consensus.sum() / n_cand:.3f} "
            f"< {cfg.min_inlier_fraction}"
        )

    centroid_fit, normal_fit = _tls_fit(pts[consensus])
    normal_fit = unique_normal(normal_fit, centroid_fit)
    d_fit = float(np.dot(normal_fit, centroid_fit))

    final_mask = _plane_distances(pts, normal_fit, d_fit) < cfg.inlier_threshold
    inliers = candidates[final_mask]
    if len(inliers) < 3:
        raise NoConsensus("refit plane lost its consensus set")
    centroid = cloud.points[inliers].mean(axis=0)
    boundary = _hull_on_plane(cloud.points[inliers], normal_fit, centroid)
    return PlaneModel(
        normal=normal_fit,
        distance=d_fit,
        centroid=centroid,
        boundary=boundary,
        inlier_indices=inliers,
    )


def extract_planes(cloud: PointCloud, cfg: SegmentationConfig) -> list[PlaneModel]:
    """Extract up to max_planes planes, removing inliers between rounds.

    Stops when the remaining valid points fall below stop_fraction of the
    initial count, the plane budget is exhausted, or a round finds no
    consensus. Ground planes are dropped from the output (their inliers are
    still consumed). Output is sorted by inlier count, descending.
    """
    rng = np.random.default_rng(cfg.rng_seed)
    candidates = np.flatnonzero(cloud.valid)
    initial = len(candidates)
    planes: list[PlaneModel] = []
    extracted = 0
    while extracted < cfg.max_planes and len(candidates) >= max(3, cfg.stop_fraction * initial):
        try:
            plane = ransac_plane(cloud, cfg, rng=rng, candidates=candidates)
        except InsufficientPoints:
            if extracted == 0:
                raise
            break
        except NoConsensus:
            break
        extracted += 1
        candidates = np.setdiff1d(candidates, plane.inlier_indices, assume_unique=True)
        if cfg.ground_filter_enabled and is_ground(plane, cfg):
            continue
        planes.append(plane)
    if initial < 3 and extracted == 0:
        raise InsufficientPoints(f"{initial} valid points")
    planes.sort(key=lambda p: -p.inlier_count)
    return planes
