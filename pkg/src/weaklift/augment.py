"""Training-set augmentation for small and scarce categories.

Scenes holding small objects are oversampled and their small objects
copy-pasted; scarce categories are inserted into the scenes whose category
make-up correlates best with them.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Optional

import numpy as np

from .labels import WeakLabel
from .scene import (GenConfig, PlacementRecord, VirtualScene, collision_stage, gravity_stage,
                    initial_positions, sample_scene)
from .shapes import TemplateBank

log = logging.getLogger(__name__)

DEFAULT_SCARCE_COUNTS = {"bathtub": 40, "bench": 70, "dresser": 15, "laptop": 55, "wardrobe": 50}


@dataclass(frozen=True)
class AugmentConfig:
    copy_prob: float = 0.75
    oversample_factor: int = 2
    r: float = 0.25
    scarce_counts: dict = field(default_factory=lambda: dict(DEFAULT_SCARCE_COUNTS))

    def __post_init__(self):
        if not 0.0 <= self.copy_prob <= 1.0:
            raise ValueError("copy_prob must lie in [0, 1]")
        if self.r < 0 or self.oversample_factor < 0:
            raise ValueError("r and oversample_factor must be nonnegative")


@dataclass
class SceneEntry:
    scene_id: str
    objects: list[tuple[int, str]]  # (instance_id, category)
    bounds: tuple[tuple[float, float], tuple[float, float]]  # (xmin, ymin), (xmax, ymax)
    presence: Optional[np.ndarray] = None


@dataclass
class SceneCatalog:
    categories: list[str]
    scenes: list[SceneEntry]

    def __post_init__(self):
        index = {c: i for i, c in enumerate(self.categories)}
        for s in self.scenes:
            vec = np.zeros(len(self.categories), dtype=bool)
            for _, cat in s.objects:
                if cat in index:
                    vec[index[cat]] = True
            s.presence = vec

    @property
    def presence(self) -> np.ndarray:
        return np.array([s.presence for s in self.scenes], dtype=bool).reshape(-1, len(self.categories))

    def index(self, category) -> int:
        return category if isinstance(category, (int, np.integer)) else self.categories.index(category)

    @classmethod
    def from_labels(cls, categories: list[str], scenes: dict[str, list[WeakLabel]],
                    bounds: Optional[dict] = None) -> "SceneCatalog":
        entries = []
        for sid, labels in scenes.items():
            if bounds and sid in bounds:
                b = bounds[sid]
            elif labels:
                xy = np.array([lb.center[:2] for lb in labels])
                b = (tuple(xy.min(axis=0)), tuple(xy.max(axis=0)))
            else:
                b = ((0.0, 0.0), (0.0, 0.0))
            entries.append(SceneEntry(sid, [(i + 1, lb.category) for i, lb in enumerate(labels)], b))
        return cls(list(categories), entries)


def category_cooccurrence(catalog: SceneCatalog) -> Callable[..., int]:
    """Return ``num(indices)``: how many scenes contain every listed category."""
    presence = catalog.presence

    def num(indices=()) -> int:
        cols = [catalog.index(i) for i in indices]
        if not cols:
            return len(presence)
        return int(np.all(presence[:, cols], axis=1).sum())

    return num


def _correlation_counts(catalog: SceneCatalog, category) -> tuple[list[int], int]:
    num = category_cooccurrence(catalog)
    c = catalog.index(category)
    base = num([c])
    if base == 0:
        raise ValueError(f"category absent: {catalog.categories[c]}")
    joint = [0 if i == c else num([i, c]) for i in range(len(catalog.categories))]
    return joint, base


def correlation_vector(catalog: SceneCatalog, category) -> np.ndarray:
    joint, base = _correlation_counts(catalog, category)
    return np.array(joint, dtype=float) / base


def scene_correlation(presence, v_c, r: float = 0.25) -> float:
    presence = np.asarray(presence, dtype=float)
    v_c = np.asarray(v_c, dtype=float)
    if presence.shape != v_c.shape:
        raise ValueError("presence and correlation vectors differ in length")
    # one correctly rounded sum over the unrounded terms, independent of order
    return math.fsum((presence * v_c).tolist() + (-presence * r).tolist())


def rank_scenes(catalog: SceneCatalog, category, r: float) -> list[str]:
    """Scene ids by descending correlation with ``category``, ties by id.

    Scores are compared as exact fractions so equal scores tie exactly.
    """
    joint, base = _correlation_counts(catalog, category)
    rr = Fraction(str(r))
    v = [Fraction(j, base) for j in joint]

    def score(entry: SceneEntry) -> Fraction:
        return sum((v[i] - rr for i in np.flatnonzero(entry.presence)), Fraction(0))

    return [s.scene_id for s in sorted(catalog.scenes, key=lambda s: (-score(s), s.scene_id))]


@dataclass
class CopyOp:
    source: int  # instance id of the object being copied
    category: str
    xy: tuple[float, float]


@dataclass
class Insertion:
    category: str
    xy: tuple[float, float]


@dataclass
class ScenePlan:
    scene_id: str
    oversample: int = 0
    copies: list[list[CopyOp]] = field(default_factory=list)
    insertions: list[Insertion] = field(default_factory=list)

    @property
    def n_outputs(self) -> int:
        return max(self.oversample, 1 if self.insertions else 0)

    def to_dict(self) -> dict:
        return {"scene_id": self.scene_id, "oversample": self.oversample,
                "copies": [[{"source": c.source, "category": c.category, "xy": list(c.xy)}
                            for c in batch] for batch in self.copies],
                "insertions": [{"category": i.category, "xy": list(i.xy)} for i in self.insertions]}


def _uniform_xy(bounds, rng) -> tuple[float, float]:
    (x0, y0), (x1, y1) = bounds
    return float(rng.uniform(x0, x1)), float(rng.uniform(y0, y1))


def plan_augmentation(catalog: SceneCatalog, config: AugmentConfig, rng: np.random.Generator,
                      small: set[str], scarce: Optional[set[str]] = None) -> dict[str, ScenePlan]:
    """Decide oversampling, small-object copies and scarce insertions per scene.

    Scarce insertions land in the first augmented copy of a scene; a scene
    with insertions but no small objects gets a single augmented copy.
    """
    plans: dict[str, ScenePlan] = {}
    for entry in catalog.scenes:
        smalls = [(iid, cat) for iid, cat in entry.objects if cat in small]
        if not smalls or config.oversample_factor == 0:
            continue
        plan = ScenePlan(entry.scene_id, config.oversample_factor)
        for _ in range(config.oversample_factor):
            batch = []
            for iid, cat in smalls:
                if rng.random() < config.copy_prob:
                    batch.append(CopyOp(iid, cat, _uniform_xy(entry.bounds, rng)))
            plan.copies.append(batch)
        plans[entry.scene_id] = plan

    scarce = set(config.scarce_counts) if scarce is None else scarce
    by_id = {s.scene_id: s for s in catalog.scenes}
    for category in sorted(scarce):
        count = int(config.scarce_counts.get(category, 0))
        if count <= 0 or category not in catalog.categories:
            continue
        try:
            ranked = rank_scenes(catalog, category, config.r)
        except ValueError:
            log.warning("scarce category %s absent from catalog; skipped", category)
            continue
        if count > len(ranked):
            log.warning("%d %s insertions requested for %d scenes; using all scenes",
                        count, category, len(ranked))
        for sid in ranked[:count]:
            plan = plans.setdefault(sid, ScenePlan(sid))
            plan.insertions.append(Insertion(category, _uniform_xy(by_id[sid].bounds, rng)))
    return dict(sorted(plans.items()))


def apply_augmentation(plan: dict[str, ScenePlan], scenes: dict[str, list[PlacementRecord]],
                       bank: TemplateBank, class_names: list[str], config: GenConfig,
                       rng: np.random.Generator) -> dict[str, VirtualScene]:
    """Realise a plan as new scenes named ``<scene_id>_aug<j>``."""
    out = {}
    for sid, sp in sorted(plan.items()):
        if sid not in scenes:
            raise KeyError(f"plan references unknown scene {sid!r}")
        base = scenes[sid]
        by_id = {r.instance_id: r for r in base}
        for j in range(sp.n_outputs):
            next_id = max((r.instance_id for r in base), default=0) + 1
            added = []
            for op in (sp.copies[j] if j < len(sp.copies) else []):
                src = by_id[op.source]
                moved = src.moved(op.xy[0] - src.center[0], op.xy[1] - src.center[1])
                added.append(replace(moved, instance_id=next_id, supported_by=None))
                next_id += 1
            if j == 0 and sp.insertions:
                labels = [WeakLabel((ins.xy[0], ins.xy[1], 0.0), ins.category) for ins in sp.insertions]
                added += initial_positions(labels, bank, config, rng, start_id=next_id)
            records = gravity_stage(list(base) + added)
            records, report = collision_stage(records, rng, config)
            scene = sample_scene(records, bank, config, rng, class_names)
            scene.collision = report
            out[f"{sid}_aug{j}"] = scene
    return out
