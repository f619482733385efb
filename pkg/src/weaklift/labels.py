"""Position-level annotations: centre + category, and the centre-jitter error model."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

JITTER_MODES = ("axis", "ball")


@dataclass(frozen=True)
class WeakLabel:
    center: tuple[float, float, float]
    category: str

    def __post_init__(self):
        c = tuple(float(v) for v in self.center)
        if len(c) != 3 or not all(math.isfinite(v) for v in c):
            raise ValueError(f"invalid label center {self.center!r}")
        if not self.category:
            raise ValueError("label category must be nonempty")
        object.__setattr__(self, "center", c)


@dataclass(frozen=True)
class GroundTruthBox:
    center: tuple[float, float, float]
    extents: tuple[float, float, float]
    category: str

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        ext = tuple(float(v) for v in self.extents)
        if len(ext) != 3 or min(ext) <= 0:
            raise ValueError(f"box extents must be positive, got {self.extents!r}")
        object.__setattr__(self, "extents", ext)


def _offsets(extents: np.ndarray, error_rate: float, rng: np.random.Generator,
             mode: str) -> np.ndarray:
    if not 0.0 <= error_rate <= 1.0:
        raise ValueError(f"error_rate must lie in [0, 1], got {error_rate}")
    if mode not in JITTER_MODES:
        raise ValueError(f"unknown jitter mode {mode!r}")
    n = len(extents)
    if mode == "axis":
        unit = rng.uniform(-1.0, 1.0, size=(n, 3))
    else:
        direction = rng.normal(size=(n, 3))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        unit = direction * rng.uniform(size=(n, 1)) ** (1 / 3)
    return unit * error_rate * extents


def boxes_to_labels(boxes: list[GroundTruthBox], error_rate: float,
                    rng: np.random.Generator, mode: str = "axis") -> list[WeakLabel]:
    """Drop box sizes and perturb each centre by up to ``error_rate`` of its extent."""
    ext = np.array([b.extents for b in boxes], dtype=float).reshape(-1, 3)
    centers = np.array([b.center for b in boxes], dtype=float).reshape(-1, 3)
    moved = (centers + _offsets(ext, error_rate, rng, mode)).tolist()
    return [WeakLabel(tuple(c), b.category) for b, c in zip(boxes, moved)]


def jitter_labels(labels: list[WeakLabel], sizes: dict, error_rate: float,
                  rng: np.random.Generator, mode: str = "axis") -> list[WeakLabel]:
    missing = sorted({lb.category for lb in labels} - set(sizes))
    if missing:
        raise KeyError(f"unknown categories: {', '.join(missing)}")
    ext = np.array([sizes[lb.category] for lb in labels], dtype=float).reshape(-1, 3)
    centers = np.array([lb.center for lb in labels], dtype=float).reshape(-1, 3)
    moved = (centers + _offsets(ext, error_rate, rng, mode)).tolist()
    return [WeakLabel(tuple(c), lb.category) for lb, c in zip(labels, moved)]


def load_labels(path) -> tuple[str, list[WeakLabel]]:
    raw = json.loads(Path(path).read_text())
    labels = [WeakLabel(tuple(item["center"]), item["category"]) for item in raw["labels"]]
    return raw.get("scene_id", Path(path).stem), labels


def labels_to_dict(scene_id: str, labels: list[WeakLabel]) -> dict:
    return {"scene_id": scene_id,
            "labels": [{"center": list(lb.center), "category": lb.category} for lb in labels]}


def load_boxes(path) -> list[GroundTruthBox]:
    raw = json.loads(Path(path).read_text())
    items = raw["boxes"] if isinstance(raw, dict) else raw
    return [GroundTruthBox(tuple(b["center"]), tuple(b["extents"]), b["category"]) for b in items]
