"""Virtual scene generation from weak labels.

Stages: initial placement (optionally snapped to horizontal mesh segments),
gravity (ground or supporting surface contact), collision (footprint
separation in XY) and density-controlled point sampling.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .geometry import Rect, min_area_rect, rects_overlap
from .labels import WeakLabel
from .plyio import _atomic_write, write_ply
from .segments import SceneMesh, assign_segments, merge_horizontal, oversegment
from .shapes import CategoryConfig, ObjectTemplate, ShapeClass, TemplateBank, find_template

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GenConfig:
    n_points: int = 10000
    a_min: float = 0.1
    h_min: float = 0.1
    delta_h: float = 0.02
    k_seg: float = 0.05
    step: float = 0.02
    max_iters: int = 500
    scale_jitter: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n_points <= 0 or self.step <= 0 or self.max_iters <= 0:
            raise ValueError("n_points, step and max_iters must be positive")
        if min(self.a_min, self.h_min, self.delta_h, self.k_seg) < 0:
            raise ValueError("segment thresholds must be nonnegative")


@dataclass(frozen=True)
class PlacementRecord:
    """One placed instance. ``mer``/``ssh`` are world-frame and only set for supporters."""

    instance_id: int
    category: str
    center: tuple[float, float, float]
    scale: tuple[float, float, float]
    template_id: str
    theta: float
    is_supporter: bool
    shape_class: str
    extents: tuple[float, float, float]  # template l, w, h before scaling
    mer: Optional[Rect] = None
    ssh: Optional[float] = None
    supported_by: Optional[int] = None  # None means the ground

    @property
    def world_extents(self) -> tuple[float, float, float]:
        return tuple(e * s for e, s in zip(self.extents, self.scale))

    @property
    def bottom(self) -> float:
        return self.center[2] - self.world_extents[2] / 2

    @property
    def footprint(self) -> Rect:
        if self.is_supporter and self.mer is not None:
            return self.mer
        l, w, _ = self.world_extents
        return Rect.canonical(self.center[0], self.center[1], l, w, self.theta)

    def moved(self, dx: float, dy: float) -> "PlacementRecord":
        x, y, z = self.center
        mer = self.mer
        if mer is not None:
            mer = replace(mer, cx=mer.cx + dx, cy=mer.cy + dy)
        return replace(self, center=(x + dx, y + dy, z), mer=mer)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["center"], d["scale"], d["extents"] = list(self.center), list(self.scale), list(self.extents)
        d["mer"] = self.mer.to_list() if self.mer is not None else None
        d["supported_by"] = "ground" if self.supported_by is None else self.supported_by
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PlacementRecord":
        d = dict(d)
        d["center"], d["scale"], d["extents"] = (tuple(float(v) for v in d[k])
                                                 for k in ("center", "scale", "extents"))
        d["mer"] = Rect.from_list(d["mer"]) if d.get("mer") is not None else None
        d["supported_by"] = None if d.get("supported_by") in (None, "ground") else int(d["supported_by"])
        return cls(**d)


@dataclass
class CollisionReport:
    ground_resolved: bool = True
    ground_iterations: int = 0
    unresolved_supportees: list[int] = field(default_factory=list)

    @property
    def success(self) -> bool:
        return self.ground_resolved


@dataclass
class VirtualScene:
    points: np.ndarray
    instance_ids: np.ndarray
    class_ids: np.ndarray
    boxes: dict[int, dict]
    placements: list[PlacementRecord]
    collision: CollisionReport = field(default_factory=CollisionReport)

    @classmethod
    def empty(cls) -> "VirtualScene":
        return cls(np.zeros((0, 3)), np.zeros(0, dtype=np.int32), np.zeros(0, dtype=np.int32), {}, [])


def _rot(theta_deg: float) -> np.ndarray:
    t = math.radians(theta_deg)
    c, s = math.cos(t), math.sin(t)
    return np.array([[c, -s], [s, c]])


def transform_points(points: np.ndarray, scale, theta: float, center) -> np.ndarray:
    pts = np.asarray(points, dtype=float) * np.asarray(scale, dtype=float)
    out = np.empty_like(pts)
    out[:, :2] = pts[:, :2] @ _rot(theta).T
    out[:, 2] = pts[:, 2]
    return out + np.asarray(center, dtype=float)


def world_mer(tpl: ObjectTemplate, scale, theta: float, center) -> Rect:
    corners = np.column_stack([tpl.mer.corners(), np.zeros(4)])
    return min_area_rect(transform_points(corners, scale, theta, center)[:, :2])


def _fit_to_segment(tpl: ObjectTemplate, seg: Rect) -> tuple[tuple, float, np.ndarray]:
    """Scale, rotation and XY centre that put the template MER onto ``seg``.

    Exact when the template MER is aligned with the template axes.
    """
    tm = tpl.mer
    folded = tm.theta % 180.0
    along_y = abs(folded - 90.0) < 45.0

    def ratio(a, b):
        return a / b if b > 1e-12 and a > 1e-12 else 1.0

    if along_y:
        sx, sy = ratio(seg.width, tm.width), ratio(seg.length, tm.length)
    else:
        sx, sy = ratio(seg.length, tm.length), ratio(seg.width, tm.width)
    theta = (seg.theta - tm.theta) % 360.0
    scale = (sx, sy, 1.0)
    offset = _rot(theta) @ (np.array([tm.cx, tm.cy]) * np.array([sx, sy]))
    return scale, theta, seg.center - offset


def initial_positions(labels: list[WeakLabel], bank: TemplateBank, config: GenConfig,
                      rng: np.random.Generator, seg_assignment: Optional[dict[int, Rect]] = None,
                      start_id: int = 1) -> list[PlacementRecord]:
    """One record per label; instance ids count up from ``start_id``."""
    seg_assignment = seg_assignment or {}
    missing = sorted({lb.category for lb in labels if not bank.get(lb.category)})
    if missing:
        raise KeyError(f"no templates for categories: {', '.join(missing)}")

    records = []
    for i, label in enumerate(labels):
        templates = bank[label.category]
        supporter = templates[0].shape_class is ShapeClass.SUPPORTER
        seg = seg_assignment.get(i) if supporter else None
        x, y, z = label.center
        if seg is not None:
            pool = [t for t in templates if t.css]
            if not pool:
                log.warning("no compact-surface template for %s; using any template", label.category)
                pool = templates
            tpl = pool[int(rng.integers(len(pool)))]
            scale, theta, (x, y) = _fit_to_segment(tpl, seg)
        else:
            tpl = templates[int(rng.integers(len(templates)))]
            theta = float(rng.uniform(0.0, 360.0))
            if config.scale_jitter > 0:
                j = config.scale_jitter
                scale = tuple(float(v) for v in rng.uniform(1 - j, 1 + j, size=3))
            else:
                scale = (1.0, 1.0, 1.0)
        center = (float(x), float(y), float(z))
        mer = ssh = None
        if supporter:
            mer = world_mer(tpl, scale, theta, center)
            ssh = center[2] - tpl.h * scale[2] / 2 + scale[2] * tpl.ssh
        records.append(PlacementRecord(
            instance_id=start_id + i, category=label.category, center=center,
            scale=tuple(float(s) for s in scale), template_id=tpl.id, theta=float(theta),
            is_supporter=supporter, shape_class=tpl.shape_class.value,
            extents=(tpl.l, tpl.w, tpl.h), mer=mer, ssh=ssh))
    return records


def _set_bottom(rec: PlacementRecord, bottom: float, supported_by: Optional[int]) -> PlacementRecord:
    z = bottom + rec.world_extents[2] / 2
    ssh = None if rec.ssh is None else rec.ssh + (z - rec.center[2])
    return replace(rec, center=(rec.center[0], rec.center[1], z), ssh=ssh, supported_by=supported_by)


def gravity_stage(records: list[PlacementRecord]) -> list[PlacementRecord]:
    """Drop ground objects to z=0 and supportees onto the nearest supporter under them."""
    out = {}
    for rec in records:
        if rec.shape_class != ShapeClass.SUPPORTEE.value:
            out[rec.instance_id] = _set_bottom(rec, 0.0, None)
    supporters = [r for r in out.values() if r.is_supporter and r.mer is not None]
    for rec in records:
        if rec.shape_class != ShapeClass.SUPPORTEE.value:
            continue
        xy = np.array(rec.center[:2])
        under = [s for s in supporters if s.mer.contains(xy)]
        if under:
            sup = min(under, key=lambda s: (float(np.hypot(*(np.array(s.center[:2]) - xy))),
                                            s.instance_id))
            out[rec.instance_id] = _set_bottom(rec, sup.ssh, sup.instance_id)
        else:
            out[rec.instance_id] = _set_bottom(rec, 0.0, None)
    return [out[r.instance_id] for r in records]


def _separate(rects: list[Rect], half_step: float, rng: np.random.Generator) -> tuple[np.ndarray, int]:
    """Per-rect displacement for one iteration, plus the number of overlapping pairs."""
    n = len(rects)
    disp = np.zeros((n, 2))
    hits = 0
    for i in range(n):
        for j in range(i + 1, n):
            hit, _ = rects_overlap(rects[i], rects[j])
            if not hit:
                continue
            hits += 1
            d = rects[j].center - rects[i].center
            norm = float(np.hypot(*d))
            if norm < 1e-12:
                ang = rng.uniform(0.0, 2 * math.pi)
                d, norm = np.array([math.cos(ang), math.sin(ang)]), 1.0
            d = d / norm * half_step
            disp[i] -= d
            disp[j] += d
    return disp, hits


def _total_overlap(rects: list[Rect]) -> float:
    return sum(rects_overlap(a, b)[1] for i, a in enumerate(rects) for b in rects[i + 1:])


def _riders(records: list[PlacementRecord]) -> dict[int, list[int]]:
    out: dict[int, list[int]] = {}
    for r in records:
        if r.supported_by is not None:
            out.setdefault(r.supported_by, []).append(r.instance_id)
    return out


def ground_pass(records: list[PlacementRecord], rng: np.random.Generator,
                config: GenConfig = GenConfig()) -> tuple[list[PlacementRecord], CollisionReport]:
    """Separate ground-object footprints; supportees ride along rigidly."""
    recs = {r.instance_id: r for r in records}
    report = CollisionReport(ground_resolved=False)
    half = config.step / 2
    ground = sorted((r for r in records if r.supported_by is None),
                    key=lambda r: (-r.footprint.area, r.instance_id))
    gids = [r.instance_id for r in ground]
    riders = _riders(records)

    for it in range(config.max_iters + 1):
        disp, hits = _separate([recs[g].footprint for g in gids], half, rng)
        if hits == 0:
            report.ground_resolved = True
            report.ground_iterations = it
            break
        if it == config.max_iters:
            break
        for g, (dx, dy) in zip(gids, disp):
            if dx == 0.0 and dy == 0.0:
                continue
            recs[g] = recs[g].moved(dx, dy)
            for rid in riders.get(g, []):
                recs[rid] = recs[rid].moved(dx, dy)
    if not report.ground_resolved:
        report.ground_iterations = config.max_iters
        log.warning("ground objects still overlap after %d iterations", config.max_iters)
    return [recs[r.instance_id] for r in records], report


def supportee_pass(records: list[PlacementRecord], rng: np.random.Generator,
                   config: GenConfig = GenConfig()) -> tuple[list[PlacementRecord], list[int]]:
    """Separate the supportees of each supporter, keeping their centres on its MER.

    Returns the records and the ids of supportees left overlapping; those keep
    the least-overlap arrangement seen.
    """
    recs = {r.instance_id: r for r in records}
    half = config.step / 2
    riders = _riders(records)
    unresolved: list[int] = []
    for sup_id in sorted(riders):
        sids = sorted(riders[sup_id])
        mer = recs[sup_id].mer
        if len(sids) < 2 or mer is None:
            continue
        best = {s: recs[s] for s in sids}
        best_total = _total_overlap([recs[s].footprint for s in sids])
        resolved = _separate([recs[s].footprint for s in sids], half, rng)[1] == 0
        for _ in range(config.max_iters):
            if resolved:
                break
            disp, _ = _separate([recs[s].footprint for s in sids], half, rng)
            for s, (dx, dy) in zip(sids, disp):
                r = recs[s]
                target = mer.clamp(np.array(r.center[:2]) + (dx, dy))
                recs[s] = r.moved(target[0] - r.center[0], target[1] - r.center[1])
            total = _total_overlap([recs[s].footprint for s in sids])
            if total < best_total:
                best_total, best = total, {s: recs[s] for s in sids}
            resolved = _separate([recs[s].footprint for s in sids], half, rng)[1] == 0
        if not resolved:
            recs.update(best)
            unresolved.extend(sids)
            log.warning("supportees %s on supporter %d could not be separated", sids, sup_id)
    return [recs[r.instance_id] for r in records], unresolved


def collision_stage(records: list[PlacementRecord], rng: np.random.Generator,
                    config: GenConfig = GenConfig()) -> tuple[list[PlacementRecord], CollisionReport]:
    """Move objects apart in XY until footprints no longer overlap.

    Ground objects go first, carrying their supportees; then the supportees
    of each supporter are separated within its MER. Only x and y change.
    """
    records, report = ground_pass(records, rng, config)
    records, report.unresolved_supportees = supportee_pass(records, rng, config)
    return records, report


def surface_area(rec: PlacementRecord) -> float:
    l, w, h = rec.world_extents
    return max(l * w, w * h, l * h)


def point_counts(records: list[PlacementRecord], n_points: int) -> list[int]:
    areas = [surface_area(r) for r in records]
    top = max(areas, default=0.0)
    if top <= 0:
        return [n_points] * len(records)
    return [max(1, int(round(n_points * a / top))) for a in areas]


def sample_scene(records: list[PlacementRecord], bank: TemplateBank, config: GenConfig,
                 rng: np.random.Generator, class_names: list[str]) -> VirtualScene:
    """Sample each placed template with a point budget proportional to its surface area."""
    if not records:
        return VirtualScene.empty()
    counts = point_counts(records, config.n_points)
    pts, inst, cls, boxes = [], [], [], {}
    for rec, count in zip(records, counts):
        tpl = find_template(bank, rec.category, rec.template_id)
        world = transform_points(tpl.points, rec.scale, rec.theta, rec.center)
        idx = rng.choice(len(world), size=count, replace=count > len(world))
        pts.append(world[idx])
        inst.append(np.full(count, rec.instance_id, dtype=np.int32))
        cid = class_names.index(rec.category)
        cls.append(np.full(count, cid, dtype=np.int32))
        lo, hi = world.min(axis=0), world.max(axis=0)
        boxes[rec.instance_id] = {"category": rec.category, "class_id": cid,
                                  "center": ((lo + hi) / 2).tolist(), "extents": (hi - lo).tolist(),
                                  "num_points": count}
    return VirtualScene(np.concatenate(pts), np.concatenate(inst), np.concatenate(cls), boxes,
                        list(records))


def segment_assignment(labels: list[WeakLabel], mesh: SceneMesh, bank: TemplateBank,
                       config: GenConfig) -> dict[int, Rect]:
    graph = merge_horizontal(oversegment(mesh, config.k_seg), mesh,
                             config.a_min, config.h_min, config.delta_h)
    sup_idx = [i for i, lb in enumerate(labels)
               if bank.get(lb.category) and bank[lb.category][0].is_supporter]
    local = assign_segments(graph.seeds, [labels[i] for i in sup_idx], mesh)
    return {sup_idx[j]: rect for j, rect in local.items()}


def generate(labels: list[WeakLabel], bank: TemplateBank, categories: CategoryConfig,
             config: GenConfig = GenConfig(), rng: Optional[np.random.Generator] = None,
             mesh: Optional[SceneMesh] = None) -> VirtualScene:
    if rng is None:
        rng = np.random.default_rng(config.seed)
    if not labels:
        return VirtualScene.empty()
    assignment = segment_assignment(labels, mesh, bank, config) if mesh is not None else None
    records = initial_positions(labels, bank, config, rng, assignment)
    records = gravity_stage(records)
    records, report = collision_stage(records, rng, config)
    scene = sample_scene(records, bank, config, rng, categories.names)
    scene.collision = report
    return scene


def scene_sidecar(scene_id: str, scene: VirtualScene, seed: Optional[int] = None) -> dict:
    return {
        "scene_id": scene_id,
        "seed": seed,
        "num_points": int(len(scene.points)),
        "collision": asdict(scene.collision),
        "instances": [{"instance_id": k, **v} for k, v in sorted(scene.boxes.items())],
        "placements": [r.to_dict() for r in scene.placements],
    }


def write_scene(out_dir, scene_id: str, scene: VirtualScene, seed: Optional[int] = None) -> None:
    """Write ``<scene_id>.ply`` and its ``<scene_id>.json`` sidecar atomically."""
    out_dir = Path(out_dir)
    pts = scene.points.astype(np.float32)
    write_ply(out_dir / f"{scene_id}.ply",
              {"x": pts[:, 0], "y": pts[:, 1], "z": pts[:, 2],
               "instance_id": scene.instance_ids.astype(np.int32),
               "class_id": scene.class_ids.astype(np.int32)})
    payload = json.dumps(scene_sidecar(scene_id, scene, seed), indent=1, sort_keys=True)
    _atomic_write(out_dir / f"{scene_id}.json", (payload + "\n").encode())


def load_sidecar(path) -> dict:
    return json.loads(Path(path).read_text())


def placements_from_sidecar(sidecar: dict) -> list[PlacementRecord]:
    return [PlacementRecord.from_dict(p) for p in sidecar["placements"]]
