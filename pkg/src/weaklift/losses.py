"""Numeric kernels of the weak-supervision and feature-alignment losses.

Plain numpy; no autograd. Gradients are provided only where a closed form is
cheap and useful for checking.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.spatial import cKDTree

from .geometry import knn

PROB_FLOOR = 1e-7


def _as_points(a, name: str) -> np.ndarray:
    pts = np.asarray(a, dtype=float)
    if pts.size == 0:
        raise ValueError(f"{name} is empty")
    return pts.reshape(-1, pts.shape[-1])


def hinge_center_loss(pred_centers, gt_centers, gt_sizes, lam: float = 0.05) -> float:
    """Sum over predictions of ``max(|c_gt - c| - lam * size_gt, 0)`` against the nearest gt."""
    gt = _as_points(gt_centers, "ground truth")
    sizes = np.broadcast_to(np.asarray(gt_sizes, dtype=float), (len(gt),))
    pred = np.asarray(pred_centers, dtype=float).reshape(-1, gt.shape[1])
    if len(pred) == 0:
        return 0.0
    d2 = ((pred[:, None, :] - gt[None, :, :]) ** 2).sum(axis=2)
    nearest = np.argmin(d2, axis=1)
    dist = np.sqrt(d2[np.arange(len(pred)), nearest])
    return float(np.maximum(dist - lam * sizes[nearest], 0.0).sum())


def chamfer_distance(a, b) -> float:
    """Mean squared nearest distance A->B plus B->A."""
    a, b = _as_points(a, "A"), _as_points(b, "B")
    da, _ = cKDTree(b).query(a)
    db, _ = cKDTree(a).query(b)
    return float(np.mean(da ** 2) + np.mean(db ** 2))


def focal_alignment_loss(p, gamma: float = 3.0) -> float:
    p = np.clip(np.asarray(p, dtype=float), PROB_FLOOR, 1.0)
    return float(-np.sum((1.0 - p) ** gamma * np.log(p)))


def focal_alignment_grad(p, gamma: float = 3.0) -> np.ndarray:
    """d/dp of the focal term, elementwise."""
    p = np.clip(np.asarray(p, dtype=float), PROB_FLOOR, 1.0)
    return gamma * (1.0 - p) ** (gamma - 1) * np.log(p) - (1.0 - p) ** gamma / p


def proposal_alignment_loss(p, s) -> float:
    p, s = np.asarray(p, dtype=float), np.asarray(s, dtype=float)
    if p.shape != s.shape:
        raise ValueError(f"shape mismatch: p {p.shape} vs s {s.shape}")
    return float(np.sum(s * (1.0 - p) ** 2))


def local_graph_feature(center, coords, features, k: int = 16,
                        mlp1: Optional[Callable] = None, mlp2: Optional[Callable] = None) -> np.ndarray:
    """Max-pool ``mlp1([f_i; c_i - c])`` over the k nearest points, then apply ``mlp2``.

    With both layers omitted this is the bare concatenate-and-max kernel.
    """
    coords = np.asarray(coords, dtype=float).reshape(-1, 3)
    features = np.asarray(features, dtype=float).reshape(len(coords), -1)
    if len(coords) < k:
        raise ValueError(f"need at least {k} feature points, got {len(coords)}")
    c = np.asarray(center, dtype=float)
    idx = knn(c, coords, k)
    stacked = np.concatenate([features[idx], coords[idx] - c], axis=1)
    if mlp1 is not None:
        stacked = np.asarray(mlp1(stacked))
    pooled = stacked.max(axis=0)
    return np.asarray(mlp2(pooled)) if mlp2 is not None else pooled


def relaxed_kps_sample(center, cloud, k: int) -> np.ndarray:
    """Nearest k points of the whole cloud, ignoring instance membership."""
    return knn(center, cloud, k)


@dataclass(frozen=True)
class WeakLossBreakdown:
    semantic: float
    objectness: float
    center: float
    intermediate: float

    @property
    def final(self) -> float:
        return self.semantic + self.objectness + self.center

    @property
    def total(self) -> float:
        return self.final + self.intermediate


def weak_detection_loss(semantic: float, objectness: float, pred_centers, gt_centers,
                        gt_sizes, votes=None, lam: float = 0.05) -> WeakLossBreakdown:
    """Final-prediction loss plus a Chamfer vote term when votes are given."""
    center = hinge_center_loss(pred_centers, gt_centers, gt_sizes, lam)
    inter = chamfer_distance(votes, gt_centers) if votes is not None and len(votes) else 0.0
    return WeakLossBreakdown(float(semantic), float(objectness), center, inter)
