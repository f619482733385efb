"""Mesh oversegmentation and horizontal-surface extraction.

Vertices are grouped with Felzenszwalb-Huttenlocher graph segmentation on
normal dissimilarity; large horizontal segments then absorb neighbours of
similar height and are summarised by their minimum-area rectangles.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Optional

import numpy as np

from .geometry import Rect, convex_hull_2d, kmeans_2d, min_area_rect, polygon_area
from .shapes import VERTICAL_NORMAL_Z

HORIZONTAL_TOL = 0.2


@dataclass
class SceneMesh:
    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if len(self.faces) == 0:
            raise ValueError("mesh has no faces")
        if self.faces.min() < 0 or self.faces.max() >= len(self.vertices):
            raise ValueError("face index out of range")

    @cached_property
    def vertex_normals(self) -> np.ndarray:
        """Area-weighted average of incident face normals."""
        v = self.vertices
        a, b, c = v[self.faces[:, 0]], v[self.faces[:, 1]], v[self.faces[:, 2]]
        fn = np.cross(b - a, c - a)  # length = 2 * area
        acc = np.zeros_like(v)
        for j in range(3):
            np.add.at(acc, self.faces[:, j], fn)
        norm = np.linalg.norm(acc, axis=1, keepdims=True)
        return np.divide(acc, norm, out=np.zeros_like(acc), where=norm > 0)

    @cached_property
    def edges(self) -> np.ndarray:
        f = self.faces
        e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e[e[:, 0] != e[:, 1]], axis=0)

    @cached_property
    def seam_links(self) -> np.ndarray:
        """Pairs of distinct vertices that share a position."""
        keys = np.round(self.vertices, 9)
        order = np.lexsort(keys.T[::-1])
        same = np.all(keys[order[1:]] == keys[order[:-1]], axis=1)
        pairs = np.stack([order[:-1][same], order[1:][same]], axis=1)
        pairs.sort(axis=1)
        return pairs.reshape(-1, 2)


@dataclass
class Segment:
    id: int
    vertex_indices: np.ndarray
    height: Optional[float] = None
    area: Optional[float] = None
    mer: Optional[Rect] = None

    def to_dict(self) -> dict:
        out = {"id": self.id, "vertices": [int(i) for i in self.vertex_indices]}
        if self.height is not None:
            out["height"] = self.height
        if self.area is not None:
            out["area"] = self.area
        if self.mer is not None:
            out["mer"] = self.mer.to_list()
        return out


@dataclass
class SegmentGraph:
    segments: list[Segment]
    edges: set[tuple[int, int]] = field(default_factory=set)

    def by_id(self) -> dict[int, Segment]:
        return {s.id: s for s in self.segments}

    def neighbours(self) -> dict[int, list[int]]:
        adj: dict[int, list[int]] = {s.id: [] for s in self.segments}
        for a, b in sorted(self.edges):
            adj[a].append(b)
            adj[b].append(a)
        return adj

    @property
    def seeds(self) -> list[Segment]:
        return [s for s in self.segments if s.mer is not None]

    def to_dict(self) -> dict:
        return {"segments": [s.to_dict() for s in self.segments],
                "edges": [list(e) for e in sorted(self.edges)]}


class _Forest:
    def __init__(self, n: int):
        self.parent = np.arange(n)
        self.size = np.ones(n, dtype=np.int64)
        self.internal = np.zeros(n)

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return int(root)

    def union(self, a: int, b: int, w: float) -> None:
        if self.size[a] < self.size[b]:
            a, b = b, a
        self.parent[b] = a
        self.size[a] += self.size[b]
        self.internal[a] = w


def _graph_from_labels(labels: np.ndarray, links: np.ndarray) -> SegmentGraph:
    _, first = np.unique(labels, return_index=True)
    order = labels[np.sort(first)]
    remap = {int(root): i for i, root in enumerate(order)}
    seg_of = np.array([remap[int(r)] for r in labels])
    members = [[] for _ in order]
    for v, s in enumerate(seg_of):
        members[s].append(v)
    segments = [Segment(i, np.array(m, dtype=np.int64)) for i, m in enumerate(members)]
    a, b = seg_of[links[:, 0]], seg_of[links[:, 1]]
    cross = a != b
    edges = {(int(min(x, y)), int(max(x, y))) for x, y in zip(a[cross], b[cross])}
    return SegmentGraph(segments, edges)


def oversegment(mesh: SceneMesh, merge_threshold: float = 0.05) -> SegmentGraph:
    """Graph segmentation on the vertex graph, edge weight ``1 - n_u . n_v``.

    Coincident vertices (duplicated along seams) are linked like mesh edges so
    that separately-stored patches still report adjacency.
    """
    links = np.concatenate([mesh.edges, mesh.seam_links]).astype(np.int64)
    normals = mesh.vertex_normals
    weights = 1.0 - np.einsum("ij,ij->i", normals[links[:, 0]], normals[links[:, 1]])
    order = np.argsort(weights, kind="stable")

    forest = _Forest(len(mesh.vertices))
    for e in order:
        ra, rb = forest.find(int(links[e, 0])), forest.find(int(links[e, 1]))
        if ra == rb:
            continue
        w = weights[e]
        tau_a = forest.internal[ra] + merge_threshold / forest.size[ra]
        tau_b = forest.internal[rb] + merge_threshold / forest.size[rb]
        if w <= min(tau_a, tau_b):
            forest.union(ra, rb, w)

    labels = np.array([forest.find(i) for i in range(len(mesh.vertices))])
    return _graph_from_labels(labels, links)


def _lower_median(values: np.ndarray) -> float:
    s = np.sort(values)
    return float(s[(len(s) - 1) // 2])


def is_horizontal(segment: Segment, mesh: SceneMesh) -> bool:
    z = mesh.vertices[segment.vertex_indices, 2]
    med = _lower_median(z)
    return abs(z.max() - med) < HORIZONTAL_TOL or abs(z.min() - med) < HORIZONTAL_TOL


def segment_area(segment: Segment, mesh: SceneMesh) -> float:
    return polygon_area(convex_hull_2d(mesh.vertices[segment.vertex_indices, :2]))


def segment_height(segment: Segment, mesh: SceneMesh) -> float:
    idx = segment.vertex_indices
    vertical = np.abs(mesh.vertex_normals[idx, 2]) > VERTICAL_NORMAL_Z
    if not vertical.any():
        raise ValueError("not a surface segment")
    return float(mesh.vertices[idx[vertical], 2].mean())


def _height_or_none(segment: Segment, mesh: SceneMesh) -> Optional[float]:
    try:
        return segment_height(segment, mesh)
    except ValueError:
        return None


def merge_horizontal(graph: SegmentGraph, mesh: SceneMesh, a_min: float = 0.1,
                     h_min: float = 0.1, delta_h: float = 0.02) -> SegmentGraph:
    """Grow large horizontal seeds by absorbing neighbours of similar height.

    Seeds go in descending area order; each grows breadth-first. Merged
    segments keep the seed's height, and every final seed gets its MER.
    """
    segs = graph.by_id()
    heights = {i: _height_or_none(s, mesh) for i, s in segs.items()}
    areas = {i: segment_area(s, mesh) for i, s in segs.items()}
    candidates = [i for i, s in segs.items()
                  if heights[i] is not None and areas[i] > a_min and heights[i] > h_min
                  and is_horizontal(s, mesh)]
    candidates.sort(key=lambda i: (-areas[i], i))
    adj = graph.neighbours()

    owner: dict[int, int] = {}
    for seed in candidates:
        if seed in owner:
            continue
        owner[seed] = seed
        queue = deque(adj[seed])
        while queue:
            nb = queue.popleft()
            if nb in owner:
                continue
            h = heights[nb]
            if h is not None and abs(h - heights[seed]) < delta_h:
                owner[nb] = seed
                queue.extend(adj[nb])

    groups: dict[int, list[int]] = {}
    for sid, root in owner.items():
        groups.setdefault(root, []).append(sid)

    out = []
    for sid in sorted(segs):
        if sid in owner and owner[sid] != sid:
            continue
        seg = segs[sid]
        if sid in groups:
            idx = np.sort(np.concatenate([segs[m].vertex_indices for m in groups[sid]]))
            xy = mesh.vertices[idx, :2]
            out.append(Segment(sid, idx, heights[sid], polygon_area(convex_hull_2d(xy)),
                               min_area_rect(xy)))
        else:
            out.append(replace(seg, height=heights[sid], area=areas[sid], mer=None))
    remap = {sid: owner.get(sid, sid) for sid in segs}
    edges = {(min(remap[a], remap[b]), max(remap[a], remap[b]))
             for a, b in graph.edges if remap[a] != remap[b]}
    return SegmentGraph(out, edges)


def assign_segments(seeds: list[Segment], labels, mesh: SceneMesh) -> dict[int, Rect]:
    """Map supporter label index -> MER of the seed surface under its centre.

    A label inside several MERs takes the one whose centre is nearest. When
    several labels share a seed, the seed's vertices are clustered with the
    label centres as initial centroids and each label gets its cluster's MER.
    """
    centers = np.array([np.asarray(getattr(lb, "center", lb), dtype=float)[:2] for lb in labels])
    claims: dict[int, list[int]] = {}
    for li, c in enumerate(centers):
        inside = [s for s in seeds if s.mer is not None and s.mer.contains(c)]
        if not inside:
            continue
        best = min(inside, key=lambda s: (float(np.hypot(*(s.mer.center - c))), s.id))
        claims.setdefault(best.id, []).append(li)

    by_id = {s.id: s for s in seeds}
    result: dict[int, Rect] = {}
    for sid, members in claims.items():
        seed = by_id[sid]
        if len(members) == 1:
            result[members[0]] = seed.mer
            continue
        xy = mesh.vertices[seed.vertex_indices, :2]
        if len(xy) < len(members):
            for li in members:
                result[li] = seed.mer
            continue
        assign = kmeans_2d(xy, len(members), initial_centroids=centers[members])
        for j, li in enumerate(members):
            cluster = xy[assign == j]
            result[li] = min_area_rect(cluster) if len(cluster) else seed.mer
    return result
