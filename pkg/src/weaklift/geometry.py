"""Planar and point-cloud geometry used throughout the label-enhancement pipeline.

Points are plain numpy arrays: ``(n, 2)`` for planar sets and ``(n, 3)`` for
clouds. Z is up.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

OVERLAP_EPS = 1e-8


@dataclass(frozen=True)
class Rect:
    """Oriented rectangle in the XY plane.

    ``theta`` (degrees) is the direction of the ``length`` side. Canonical form
    has ``length >= width`` and ``theta`` in [0, 180); squares fold into [0, 90).
    """

    cx: float
    cy: float
    length: float
    width: float
    theta: float

    @classmethod
    def canonical(cls, cx, cy, length, width, theta) -> "Rect":
        length, width = float(abs(length)), float(abs(width))
        theta = float(theta)
        if width > length:
            length, width = width, length
            theta += 90.0
        period = 90.0 if length - width <= 1e-12 * max(length, 1.0) else 180.0
        theta = math.fmod(theta, period)
        if theta < 0:
            theta += period
        if theta >= period - 1e-9:
            theta = 0.0
        return cls(float(cx), float(cy), length, width, theta)

    @property
    def area(self) -> float:
        return self.length * self.width

    @property
    def center(self) -> np.ndarray:
        return np.array([self.cx, self.cy])

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        t = math.radians(self.theta)
        u = np.array([math.cos(t), math.sin(t)])
        return u, np.array([-u[1], u[0]])

    def corners(self) -> np.ndarray:
        """Counterclockwise corners, shape (4, 2)."""
        u, v = self.axes()
        hl, hw = self.length / 2, self.width / 2
        c = self.center
        return np.array([c - hl * u - hw * v, c + hl * u - hw * v,
                         c + hl * u + hw * v, c - hl * u + hw * v])

    def to_local(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float)) - self.center
        u, v = self.axes()
        return np.stack([pts @ u, pts @ v], axis=1)

    def distance_outside(self, pts) -> np.ndarray:
        """Euclidean distance from each point to the rect (0 inside)."""
        loc = self.to_local(pts)
        dx = np.maximum(np.abs(loc[:, 0]) - self.length / 2, 0.0)
        dy = np.maximum(np.abs(loc[:, 1]) - self.width / 2, 0.0)
        return np.hypot(dx, dy)

    def contains(self, pt, tol: float = 1e-9) -> bool:
        return bool(self.distance_outside(pt)[0] <= tol)

    def clamp(self, pt) -> np.ndarray:
        """Nearest point of the rect to ``pt``."""
        loc = self.to_local(pt)[0]
        lx = min(max(loc[0], -self.length / 2), self.length / 2)
        ly = min(max(loc[1], -self.width / 2), self.width / 2)
        u, v = self.axes()
        return self.center + lx * u + ly * v

    def to_list(self) -> list[float]:
        return [self.cx, self.cy, self.length, self.width, self.theta]

    @classmethod
    def from_list(cls, values) -> "Rect":
        return cls(*(float(v) for v in values))


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray
    normals: Optional[np.ndarray] = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        object.__setattr__(self, "points", pts)
        if self.normals is not None:
            nrm = np.asarray(self.normals, dtype=float).reshape(-1, 3)
            if len(nrm) != len(pts):
                raise ValueError("normals and points differ in count")
            object.__setattr__(self, "normals", nrm)

    def __len__(self) -> int:
        return len(self.points)


def _as_2d(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.size == 0:
        raise ValueError("empty point set")
    pts = pts.reshape(-1, pts.shape[-1])[:, :2]
    if not np.all(np.isfinite(pts)):
        raise ValueError("non-finite coordinates")
    return pts


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull_2d(points) -> np.ndarray:
    """Counterclockwise hull via Andrew's monotone chain.

    Collinear input yields the two extreme points; a single (or repeated)
    point yields one vertex.
    """
    pts = _as_2d(points)
    uniq = sorted(set(map(tuple, pts.tolist())))
    if len(uniq) <= 2:
        return np.array(uniq, dtype=float)

    lower: list = []
    for p in uniq:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in reversed(uniq):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    hull = lower[:-1] + upper[:-1]
    return np.array(hull, dtype=float)


def polygon_area(polygon) -> float:
    """Shoelace area (absolute) of a simple polygon."""
    poly = np.asarray(polygon, dtype=float).reshape(-1, 2)
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return float(abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))) / 2)


def min_area_rect(points) -> Rect:
    """Minimum-area enclosing rectangle by rotating calipers over hull edges."""
    hull = convex_hull_2d(points)
    if len(hull) == 1:
        return Rect.canonical(hull[0, 0], hull[0, 1], 0.0, 0.0, 0.0)

    edges = np.roll(hull, -1, axis=0) - hull
    if len(hull) == 2:
        edges = edges[:1]
    angles = np.arctan2(edges[:, 1], edges[:, 0])
    u = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    v = np.stack([-u[:, 1], u[:, 0]], axis=1)
    pu = hull @ u.T  # (h, e)
    pv = hull @ v.T
    ext_u = pu.max(axis=0) - pu.min(axis=0)
    ext_v = pv.max(axis=0) - pv.min(axis=0)
    areas = ext_u * ext_v
    # prefer the smallest area; ties resolved by lowest edge index
    best = int(np.argmin(areas))
    mid_u = (pu[:, best].max() + pu[:, best].min()) / 2
    mid_v = (pv[:, best].max() + pv[:, best].min()) / 2
    center = mid_u * u[best] + mid_v * v[best]
    return Rect.canonical(center[0], center[1], ext_u[best], ext_v[best],
                          math.degrees(angles[best]))


def _clip(subject: list, clipper: np.ndarray) -> list:
    # Sutherland-Hodgman; clipper is convex and counterclockwise
    out = subject
    n = len(clipper)
    for i in range(n):
        if not out:
            break
        a, b = clipper[i], clipper[(i + 1) % n]
        inp, out = out, []
        for j in range(len(inp)):
            p, q = inp[j - 1], inp[j]
            cp, cq = _cross(a, b, p), _cross(a, b, q)
            if cq >= 0:
                if cp < 0:
                    t = cp / (cp - cq)
                    out.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
                out.append(q)
            elif cp >= 0:
                t = cp / (cp - cq)
                out.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
    return out


def overlap_area(a: Rect, b: Rect) -> float:
    if a.area <= 0 or b.area <= 0:
        return 0.0
    reach = (math.hypot(a.length, a.width) + math.hypot(b.length, b.width)) / 2
    if math.hypot(a.cx - b.cx, a.cy - b.cy) >= reach:
        return 0.0
    # fixed operand order keeps the result exactly symmetric
    if a.to_list() > b.to_list():
        a, b = b, a
    poly = _clip([tuple(p) for p in a.corners()], b.corners())
    return polygon_area(poly) if len(poly) >= 3 else 0.0


def rects_overlap(a: Rect, b: Rect) -> tuple[bool, float]:
    area = overlap_area(a, b)
    return area > OVERLAP_EPS, area


def knn(query, points, k: int) -> np.ndarray:
    """Exact k nearest indices, ties broken by lower index."""
    pts = points.points if isinstance(points, PointCloud) else np.asarray(points, dtype=float)
    if k > len(pts):
        raise ValueError(f"k={k} exceeds cloud size {len(pts)}")
    d2 = np.sum((pts - np.asarray(query, dtype=float)) ** 2, axis=1)
    return np.argsort(d2, kind="stable")[:k]


def estimate_normals(cloud, k: int = 16) -> PointCloud:
    """PCA normals over k nearest neighbours, oriented so that z >= 0."""
    pts = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=float)
    if len(pts) < k + 1:
        raise ValueError(f"need at least {k + 1} points for k={k}")
    _, idx = cKDTree(pts).query(pts, k=k + 1)
    nbrs = pts[idx]
    centered = nbrs - nbrs.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered)
    _, vecs = np.linalg.eigh(cov)
    normals = vecs[:, :, 0]
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)

    flat = np.abs(normals[:, 2]) < 1e-12
    normals[flat, 2] = 0.0
    flip = normals[:, 2] < 0
    # horizontal normals: make the first nonzero xy component positive
    lead = np.where(np.abs(normals[:, 0]) > 1e-12, normals[:, 0], normals[:, 1])
    flip |= flat & (lead < 0)
    normals[flip] *= -1
    return PointCloud(pts, normals)


def _lloyd(pts: np.ndarray, centroids: np.ndarray, max_iter: int = 100):
    labels = None
    for _ in range(max_iter):
        d2 = ((pts[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new = np.argmin(d2, axis=1)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for j in range(len(centroids)):
            members = pts[labels == j]
            if len(members):
                centroids[j] = members.mean(axis=0)
    return labels, centroids


def farthest_point_seeds(pts: np.ndarray, k: int) -> np.ndarray:
    """Deterministic seeding: the point nearest the mean, then farthest-first."""
    first = int(np.argmin(((pts - pts.mean(axis=0)) ** 2).sum(axis=1)))
    chosen = [first]
    dist = ((pts - pts[first]) ** 2).sum(axis=1)
    while len(chosen) < k:
        nxt = int(np.argmax(dist))
        chosen.append(nxt)
        dist = np.minimum(dist, ((pts - pts[nxt]) ** 2).sum(axis=1))
    return pts[chosen].copy()


def kmeans_2d(points, k: int, initial_centroids=None, max_iter: int = 100) -> np.ndarray:
    """Lloyd's k-means on planar points; returns one cluster label per point."""
    pts = _as_2d(points)
    if k > len(pts):
        raise ValueError(f"k={k} exceeds point count {len(pts)}")
    if initial_centroids is not None:
        centroids = np.array(initial_centroids, dtype=float).reshape(-1, 2)[:, :2].copy()
        if len(centroids) != k:
            raise ValueError("initial_centroids must have k rows")
    else:
        centroids = farthest_point_seeds(pts, k)
    labels, _ = _lloyd(pts, centroids, max_iter)
    return labels
