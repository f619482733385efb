"""Deterministic synthetic shapes: box-assembled templates and small test fixtures.

The templates stand in for CAD models when none are available; the fixtures
are built so their properties can be traced by hand.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .plyio import write_mesh, write_points

Box = tuple[tuple[float, float, float], tuple[float, float, float]]  # (center, size)


def grid(x0, x1, y0, y1, nx, ny, z=0.0) -> np.ndarray:
    xs, ys = np.meshgrid(np.linspace(x0, x1, nx), np.linspace(y0, y1, ny), indexing="ij")
    return np.stack([xs.ravel(), ys.ravel(), np.full(xs.size, float(z))], axis=1)


def box_surface(center, size, spacing: float) -> np.ndarray:
    """Points on the six faces of an axis-aligned box, edges and corners included."""
    c = np.asarray(center, dtype=float)
    s = np.asarray(size, dtype=float)
    n = [max(2, int(math.ceil(v / spacing)) + 1) for v in s]
    lo, hi = c - s / 2, c + s / 2
    faces = []
    for axis in range(3):
        a, b = [i for i in range(3) if i != axis]
        ua = np.linspace(lo[a], hi[a], n[a])
        ub = np.linspace(lo[b], hi[b], n[b])
        ga, gb = np.meshgrid(ua, ub, indexing="ij")
        for level in (lo[axis], hi[axis]):
            face = np.empty((ga.size, 3))
            face[:, a], face[:, b], face[:, axis] = ga.ravel(), gb.ravel(), level
            faces.append(face)
    pts = np.concatenate(faces)
    return np.unique(np.round(pts, 9), axis=0)


def assemble(boxes: list[Box], target_points: int = 2000) -> np.ndarray:
    area = sum(2 * (s[0] * s[1] + s[1] * s[2] + s[0] * s[2]) for _, s in boxes)
    spacing = math.sqrt(area / target_points)
    return np.unique(np.concatenate([box_surface(c, s, spacing) for c, s in boxes]), axis=0)


def _legs(l, w, leg, height, inset=0.0):
    out = []
    for sx in (-1, 1):
        for sy in (-1, 1):
            out.append(((sx * (l / 2 - leg / 2 - inset), sy * (w / 2 - leg / 2 - inset), height / 2),
                        (leg, leg, height)))
    return out


def _table(v):
    l, w, h, top = 1.2, 0.8, 0.75, 0.04 + 0.01 * v
    return [((0, 0, h - top / 2), (l, w, top))] + _legs(l, w, 0.05 + 0.01 * v, h - top)


def _desk(v):
    l, w, h, top = 1.4, 0.7, 0.75, 0.04
    panel = 0.04 + 0.01 * v
    return [((0, 0, h - top / 2), (l, w, top)),
            ((-(l / 2 - panel / 2), 0, (h - top) / 2), (panel, w, h - top)),
            (((l / 2 - panel / 2), 0, (h - top) / 2), (panel, w, h - top))]


def _bed(v):
    l, w, hb = 2.0, 1.5, 0.5 + 0.05 * v
    return [((0, 0, hb / 2), (l, w, hb)), ((-(l / 2 - 0.04), 0, 0.45), (0.08, w, 0.9))]


def _bench(v):
    l, w, h = 1.4, 0.4, 0.45
    return [((0, 0, h - 0.025), (l, w, 0.05)),
            ((-(l / 2 - 0.1), 0, (h - 0.05) / 2), (0.05 + 0.01 * v, w, h - 0.05)),
            (((l / 2 - 0.1), 0, (h - 0.05) / 2), (0.05 + 0.01 * v, w, h - 0.05))]


def _bookshelf(v):
    l, w, h, t = 0.9, 0.35, 1.8, 0.03
    parts = [((-(l / 2 - t / 2), 0, h / 2), (t, w, h)), (((l / 2 - t / 2), 0, h / 2), (t, w, h))]
    shelves = 5 + v
    for i in range(shelves):
        z = t / 2 + i * (h - t) / (shelves - 1)
        parts.append(((0, 0, z), (l, w, t)))
    return parts


def _solid(l, w, h):
    return lambda v: [((0, 0, h / 2), (l * (1 + 0.05 * v), w, h))]


def _sofa(v):
    l, w = 2.0, 0.9
    return [((0, 0.05, 0.225), (l - 0.3, w - 0.1, 0.45)),
            ((0, -(w / 2 - 0.1), 0.425), (l, 0.2, 0.85)),
            ((-(l / 2 - 0.075), 0.05, 0.3), (0.15, w - 0.1, 0.6 + 0.05 * v)),
            (((l / 2 - 0.075), 0.05, 0.3), (0.15, w - 0.1, 0.6 + 0.05 * v))]


def _stool(v):
    l = w = 0.4
    h = 0.5
    return [((0, 0, h - 0.02), (l, w, 0.04))] + _legs(l, w, 0.04 + 0.01 * v, h - 0.04, 0.02)


def _chair(v):
    s, seat_h = 0.5, 0.45
    return ([((0, 0, seat_h - 0.02), (s, s, 0.04)),
             ((0, -(s / 2 - 0.02), 0.675), (s, 0.04, 0.45 + 0.05 * v))]
            + _legs(s, s, 0.04, seat_h - 0.04))


def _bathtub(v):
    l, w, h, t = 1.6, 0.75, 0.55, 0.06
    return [((0, 0, t / 2), (l, w, t)),
            ((0, -(w / 2 - t / 2), h / 2), (l, t, h)), ((0, (w / 2 - t / 2), h / 2), (l, t, h)),
            ((-(l / 2 - t / 2), 0, h / 2), (t, w, h)), (((l / 2 - t / 2), 0, h / 2), (t, w, h + 0.05 * v))]


def _toilet(v):
    return [((0.1, 0, 0.2), (0.5, 0.4, 0.4)), ((-0.25, 0, 0.5), (0.2, 0.45, 0.5 + 0.05 * v))]


def _lamp(v):
    return [((0, 0, 0.02), (0.2, 0.2, 0.04)), ((0, 0, 0.25), (0.03, 0.03, 0.42)),
            ((0, 0, 0.4 + 0.02 * v), (0.3, 0.3, 0.2))]


def _laptop(v):
    return [((0, 0, 0.01), (0.35, 0.25, 0.02)), ((0, 0.12, 0.12), (0.35, 0.01, 0.22 + 0.02 * v))]


def _monitor(v):
    return [((0, 0, 0.01), (0.22, 0.2, 0.02)), ((0, 0, 0.1), (0.04, 0.04, 0.18)),
            ((0, 0, 0.32), (0.55, 0.03 + 0.01 * v, 0.3))]


def _plant(v):
    return [((0, 0, 0.12), (0.25, 0.25, 0.24)), ((0, 0, 0.42), (0.35, 0.35 - 0.03 * v, 0.36))]


RECIPES = {
    "bathtub": _bathtub, "bed": _bed, "bench": _bench, "bookshelf": _bookshelf,
    "bottle": _solid(0.08, 0.08, 0.25), "chair": _chair, "cup": _solid(0.09, 0.09, 0.11),
    "curtain": _solid(1.6, 0.15, 2.2), "desk": _desk, "door": _solid(0.9, 0.1, 2.0),
    "dresser": _solid(1.2, 0.5, 0.9), "keyboard": _solid(0.45, 0.15, 0.03), "lamp": _lamp,
    "laptop": _laptop, "monitor": _monitor, "night_stand": _solid(0.5, 0.45, 0.6),
    "plant": _plant, "sofa": _sofa, "stool": _stool, "table": _table, "toilet": _toilet,
    "wardrobe": _solid(1.2, 0.6, 2.0),
}


def synth_template(category: str, variant: int = 0, target_points: int = 2000) -> np.ndarray:
    return assemble(RECIPES[category](variant), target_points)


def write_template_dir(root, categories=None, variants: int = 2, target_points: int = 2000) -> Path:
    """Write ``<root>/<category>/<category>_<v>.ply`` for each recipe."""
    root = Path(root)
    for category in categories or sorted(RECIPES):
        for v in range(variants):
            write_points(root / category / f"{category}_{v}.ply",
                         synth_template(category, v, target_points))
    return root


# -- hand-traceable fixtures ------------------------------------------------------

def table_fixture() -> np.ndarray:
    """1.2 x 0.6 top at z=0.7 (30x20 = 600 points) over four 50-point pads at z=0."""
    top = grid(-0.6, 0.6, -0.3, 0.3, 30, 20, z=0.7)
    pads = [grid(sx * 0.55 - 0.05, sx * 0.55 + 0.05, sy * 0.25 - 0.025, sy * 0.25 + 0.025, 10, 5)
            for sx in (-1, 1) for sy in (-1, 1)]
    return np.concatenate([top] + pads)


def pillar_fixture() -> np.ndarray:
    """1 x 1 base plate (100 points, z=0) with two 0.2 x 0.2 tops (49 points each, z=0.7)."""
    base = grid(-0.5, 0.5, -0.5, 0.5, 10, 10)
    tops = [grid(cx - 0.1, cx + 0.1, -0.1, 0.1, 7, 7, z=0.7) for cx in (-0.3, 0.3)]
    return np.concatenate([base] + tops)


def grid_mesh(origin, u, v, nu: int, nv: int):
    """Triangulated planar patch spanned by vectors u, v with nu x nv vertices."""
    origin, u, v = (np.asarray(a, dtype=float) for a in (origin, u, v))
    verts = np.array([origin + u * i / (nu - 1) + v * j / (nv - 1)
                      for i in range(nu) for j in range(nv)])
    faces = []
    for i in range(nu - 1):
        for j in range(nv - 1):
            a, b = i * nv + j, (i + 1) * nv + j
            faces += [(a, b, b + 1), (a, b + 1, a + 1)]
    return verts, np.array(faces, dtype=np.int64)


def merge_meshes(*meshes):
    verts, faces, off = [], [], 0
    for v, f in meshes:
        verts.append(v)
        faces.append(f + off)
        off += len(v)
    return np.concatenate(verts), np.concatenate(faces)


def floor_wall_mesh(n: int = 11, size: float = 2.0, wall_height: float = 2.5):
    """Floor patch at z=0 plus a wall at y=size; seam vertices are duplicated."""
    floor = grid_mesh((0, 0, 0), (size, 0, 0), (0, size, 0), n, n)
    wall = grid_mesh((0, size, 0), (size, 0, 0), (0, 0, wall_height), n, n)
    return merge_meshes(floor, wall)


def write_scene_mesh(path, vertices, faces) -> None:
    write_mesh(path, vertices, faces)
