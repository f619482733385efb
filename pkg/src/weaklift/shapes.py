"""Synthetic shape templates: loading, normalization and supporter properties.

Supporter templates carry three properties: the XY minimum-area enclosing
rectangle, the supporting-surface height and whether that surface is compact
enough to be approximated by the rectangle.
"""

from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from .geometry import (PointCloud, Rect, convex_hull_2d, estimate_normals,
                       kmeans_2d, min_area_rect, polygon_area)
from .plyio import read_points

log = logging.getLogger(__name__)

VERTICAL_NORMAL_Z = 0.88
NORMAL_K = 16


class ShapeClass(str, enum.Enum):
    SUPPORTER = "supporter"
    STANDER = "stander"
    SUPPORTEE = "supportee"


@dataclass(frozen=True)
class CategoryInfo:
    shape_class: ShapeClass
    mean_size: tuple[float, float, float]
    small: bool = False
    scarce: bool = False


@dataclass
class CategoryConfig:
    categories: dict[str, CategoryInfo] = field(default_factory=dict)

    def __contains__(self, name: str) -> bool:
        return name in self.categories

    def __getitem__(self, name: str) -> CategoryInfo:
        return self.categories[name]

    @property
    def names(self) -> list[str]:
        return list(self.categories)

    def class_id(self, name: str) -> int:
        return self.names.index(name)

    @property
    def small(self) -> set[str]:
        return {n for n, c in self.categories.items() if c.small}

    @property
    def scarce(self) -> set[str]:
        return {n for n, c in self.categories.items() if c.scarce}

    @classmethod
    def from_dict(cls, raw: dict) -> "CategoryConfig":
        cats = {}
        for name, entry in raw.items():
            size = tuple(float(v) for v in entry["mean_size"])
            if len(size) != 3 or min(size) <= 0:
                raise ValueError(f"category {name!r}: mean_size must be three positive numbers")
            cats[name] = CategoryInfo(ShapeClass(entry["class"]), size,
                                      bool(entry.get("small", False)),
                                      bool(entry.get("scarce", False)))
        return cls(cats)

    @classmethod
    def load(cls, path=None) -> "CategoryConfig":
        if path is None:
            text = resources.files("weaklift").joinpath("data/categories.json").read_text()
        else:
            text = Path(path).read_text()
        return cls.from_dict(json.loads(text))

    def to_dict(self) -> dict:
        return {n: {"class": c.shape_class.value, "mean_size": list(c.mean_size),
                    "small": c.small, "scarce": c.scarce}
                for n, c in self.categories.items()}


@dataclass
class ObjectTemplate:
    """A template cloud at class size, centred on its bounding box.

    ``ssh`` is measured from the template bottom, so ``0 <= ssh <= h``.
    """

    id: str
    category: str
    cloud: PointCloud
    l: float
    w: float
    h: float
    shape_class: ShapeClass
    mer: Optional[Rect] = None
    ssh: Optional[float] = None
    css: Optional[bool] = None

    @property
    def points(self) -> np.ndarray:
        return self.cloud.points

    @property
    def is_supporter(self) -> bool:
        return self.shape_class is ShapeClass.SUPPORTER


TemplateBank = dict[str, list[ObjectTemplate]]


class TemplateBankError(RuntimeError):
    def __init__(self, failures: dict[str, str], bank: TemplateBank):
        self.failures = failures
        self.bank = bank
        listing = "; ".join(f"{p}: {msg}" for p, msg in failures.items())
        super().__init__(f"{len(failures)} template(s) failed: {listing}")


def _points(obj) -> np.ndarray:
    if isinstance(obj, ObjectTemplate):
        return obj.points
    if isinstance(obj, PointCloud):
        return obj.points
    return np.asarray(obj, dtype=float).reshape(-1, 3)


def normalize_template(raw) -> np.ndarray:
    """Centre on the centroid and scale so the farthest point has norm 1."""
    pts = _points(raw)
    if len(pts) == 0:
        raise ValueError("empty template cloud")
    pts = pts - pts.mean(axis=0)
    radius = np.linalg.norm(pts, axis=1).max()
    if radius > 0:
        pts = pts / radius
    return pts


def compute_mer(template) -> Rect:
    return min_area_rect(_points(template)[:, :2])


def surface_height_slice(z_values) -> float:
    """Mean of the sorted heights between the 80th and 90th percentile indices."""
    lz = np.sort(np.asarray(z_values, dtype=float))
    n = len(lz)
    if n == 0:
        raise ValueError("no supporting surface found")
    lo, hi = (4 * n) // 5, (9 * n) // 10
    if hi <= lo:
        return float(lz[lo])
    return float(lz[lo:hi].mean())


def vertical_heights(points, k: int = NORMAL_K, normals=None) -> np.ndarray:
    """Z values of points whose normal is within ~28 degrees of vertical."""
    pts = _points(points)
    if normals is None:
        normals = estimate_normals(pts, k).normals
    return pts[np.abs(normals[:, 2]) > VERTICAL_NORMAL_Z, 2]


def compute_ssh(template, k: int = NORMAL_K) -> float:
    """Supporting-surface height in the template's own z coordinates."""
    zs = vertical_heights(template, k)
    if len(zs) == 0:
        raise ValueError("no supporting surface found")
    return surface_height_slice(zs)


def compute_css(template, ssh: float, mer: Optional[Rect] = None) -> bool:
    pts = _points(template)
    if mer is None:
        mer = compute_mer(pts)
    h = float(pts[:, 2].max() - pts[:, 2].min())
    band = pts[(pts[:, 2] > ssh - h / 10) & (pts[:, 2] < ssh + h / 10), :2]
    if len(band) == 0:
        return False
    k = 2 if len(np.unique(band, axis=0)) >= 2 else 1
    labels = kmeans_2d(band, k)
    area = sum(polygon_area(convex_hull_2d(band[labels == j])) for j in range(k))
    return bool(area > 0.9 * mer.length * mer.width)


def make_template(template_id: str, category: str, raw_points, info: CategoryInfo,
                  k: int = NORMAL_K) -> ObjectTemplate:
    """Normalize, scale each axis to the class mean size and derive properties."""
    pts = normalize_template(raw_points)
    ext = pts.max(axis=0) - pts.min(axis=0)
    target = np.asarray(info.mean_size, dtype=float)
    factor = np.where(ext > 0, target / np.where(ext > 0, ext, 1.0), 1.0)
    pts = pts * factor
    pts = pts - (pts.max(axis=0) + pts.min(axis=0)) / 2
    l, w, h = (float(v) for v in pts.max(axis=0) - pts.min(axis=0))

    tpl = ObjectTemplate(template_id, category, PointCloud(pts), l, w, h, info.shape_class)
    if info.shape_class is ShapeClass.SUPPORTER:
        tpl.mer = compute_mer(pts)
        ssh_abs = compute_ssh(pts, k)
        tpl.ssh = ssh_abs - float(pts[:, 2].min())
        tpl.css = compute_css(pts, ssh_abs, tpl.mer)
    return tpl


def build_template_bank(directory, config: CategoryConfig) -> TemplateBank:
    """Load ``<directory>/<category>/<id>.ply`` templates.

    Raises TemplateBankError after visiting every file if any failed; the
    exception carries the partial bank.
    """
    root = Path(directory)
    bank: TemplateBank = {}
    failures: dict[str, str] = {}
    if not root.is_dir():
        raise FileNotFoundError(f"template directory not found: {root}")
    for cat_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        files = sorted(cat_dir.glob("*.ply"))
        if not files:
            continue
        category = cat_dir.name
        if category not in config:
            for f in files:
                failures[str(f)] = f"category {category!r} not in category config"
            continue
        for f in files:
            try:
                tpl = make_template(f.stem, category, read_points(f), config[category])
            except Exception as exc:  # noqa: BLE001 - report every bad file
                failures[str(f)] = str(exc) or type(exc).__name__
                continue
            bank.setdefault(category, []).append(tpl)
    if failures:
        raise TemplateBankError(failures, bank)
    return bank


def template_report(bank: TemplateBank) -> dict:
    report = {}
    for category in sorted(bank):
        for tpl in bank[category]:
            entry = {"category": category, "l": tpl.l, "w": tpl.w, "h": tpl.h,
                     "class": tpl.shape_class.value}
            if tpl.is_supporter:
                entry.update(mer=tpl.mer.to_list(), ssh=tpl.ssh, css=tpl.css)
            report[f"{category}/{tpl.id}"] = entry
    return report


def find_template(bank: TemplateBank, category: str, template_id: str) -> ObjectTemplate:
    for tpl in bank.get(category, []):
        if tpl.id == template_id:
            return tpl
    raise KeyError(f"template {category}/{template_id} not in bank")


def world_extents(tpl: ObjectTemplate, scale) -> tuple[float, float, float]:
    return tpl.l * scale[0], tpl.w * scale[1], tpl.h * scale[2]

