"""Turn centre-only weak labels into fully annotated virtual 3D scenes."""

from .geometry import (PointCloud, Rect, convex_hull_2d, estimate_normals, kmeans_2d, knn,
                       min_area_rect, polygon_area, rects_overlap)
from .labels import GroundTruthBox, WeakLabel, boxes_to_labels, jitter_labels
from .scene import GenConfig, PlacementRecord, VirtualScene, generate
from .shapes import CategoryConfig, ObjectTemplate, ShapeClass, build_template_bank

__version__ = "0.1.0"

__all__ = [
    "CategoryConfig", "GenConfig", "GroundTruthBox", "ObjectTemplate", "PlacementRecord",
    "PointCloud", "Rect", "ShapeClass", "VirtualScene", "WeakLabel", "boxes_to_labels",
    "build_template_bank", "convex_hull_2d", "estimate_normals", "generate", "jitter_labels",
    "kmeans_2d", "knn", "min_area_rect", "polygon_area", "rects_overlap",
]
