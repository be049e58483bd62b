"""Per-class Euclidean distance fields, confidence conversion, aggregation.

Distances are exact: the transform returns sqrt of the integer squared
distance to the nearest seed. Confidence planes invert and normalize by the
image diagonal so every seed pixel carries confidence exactly 1; aggregation
then suppresses object confidence wherever background confidence is high.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import errors
from .raster import PointSet, _lock

STAGE_RAW = "raw-distance"
STAGE_CONFIDENCE = "confidence"
STAGE_AGGREGATED = "aggregated"
STAGE_EXPANDED = "expanded"
STAGES = (STAGE_RAW, STAGE_CONFIDENCE, STAGE_AGGREGATED, STAGE_EXPANDED)


@dataclass(frozen=True)
class FieldStack:
    """(C+1) x H x W stack of per-class fields with a pipeline stage tag.

    `present` lists the class ids that actually have seed points; planes of
    absent classes hold a neutral value (max distance for raw stage, zero
    confidence otherwise) and are excluded from downstream argmax decisions.
    """

    planes: np.ndarray
    stage: str
    present: frozenset

    def __post_init__(self):
        p = np.asarray(self.planes, dtype=np.float64)
        if p.ndim != 3 or p.shape[0] < 2:
            raise ValueError(f"expected (C+1, H, W) planes, got shape {p.shape}")
        if self.stage not in STAGES:
            raise ValueError(f"unknown stage {self.stage!r}")
        pres = frozenset(int(c) for c in self.present)
        if any(c < 1 or c > p.shape[0] for c in pres):
            raise ValueError("present class id out of range")
        object.__setattr__(self, "planes", _lock(p.copy()))
        object.__setattr__(self, "present", pres)

    @property
    def num_classes(self) -> int:
        return self.planes.shape[0] - 1

    @property
    def height(self) -> int:
        return self.planes.shape[1]

    @property
    def width(self) -> int:
        return self.planes.shape[2]

    @property
    def background_class(self) -> int:
        return self.num_classes + 1

    def plane(self, class_id: int) -> np.ndarray:
        if not 1 <= class_id <= self.num_classes + 1:
            raise errors.OutOfRange(f"class_id {class_id} out of range")
        return self.planes[class_id - 1]


def diagonal(height: int, width: int) -> float:
    """Normalization constant: the image diagonal sqrt(H^2 + W^2)."""
    return math.sqrt(height * height + width * width)


def compute_distance_field(points, height: int, width: int) -> np.ndarray:
    """Exact minimum Euclidean distance from every pixel to the point set.

    `points` is a sequence of (x, y) pairs. Uses the separable exact
    distance transform (one pass per axis), O(H*W) per plane.
    """
    pts = list(points)
    if not pts:
        raise errors.EmptyPointSet("class has no points")
    indicator = np.ones((height, width), dtype=bool)
    for x, y in pts:
        if not (0 <= x < width and 0 <= y < height):
            raise errors.OutOfRange(f"point ({x},{y}) outside {width}x{height}")
        indicator[y, x] = False
    return ndimage.distance_transform_edt(indicator)


def to_confidence(plane: np.ndarray, height: int, width: int) -> np.ndarray:
    """Convert a raw distance plane to confidence: max(0, 1 - d / diagonal)."""
    return np.maximum(0.0, 1.0 - np.asarray(plane, dtype=np.float64) / diagonal(height, width))


def build_distance_stack(points: PointSet, height: int, width: int) -> FieldStack:
    """Raw per-class distance stack; absent classes hold the max distance."""
    points.validate_bounds(height, width)
    diag = diagonal(height, width)
    nplanes = points.num_classes + 1
    planes = np.full((nplanes, height, width), diag, dtype=np.float64)
    present = []
    for cls in range(1, nplanes + 1):
        pts = points.points_of_class(cls)
        if pts:
            planes[cls - 1] = compute_distance_field(pts, height, width)
            present.append(cls)
    return FieldStack(planes, STAGE_RAW, frozenset(present))


def build_confidence_stack(points: PointSet, height: int, width: int) -> FieldStack:
    """Confidence stack: seed pixels carry exactly 1; absent classes are zero."""
    points.validate_bounds(height, width)
    nplanes = points.num_classes + 1
    planes = np.zeros((nplanes, height, width), dtype=np.float64)
    present = []
    for cls in range(1, nplanes + 1):
        pts = points.points_of_class(cls)
        if pts:
            planes[cls - 1] = to_confidence(
                compute_distance_field(pts, height, width), height, width)
            present.append(cls)
    return FieldStack(planes, STAGE_CONFIDENCE, frozenset(present))


def aggregate(stack: FieldStack) -> FieldStack:
    """Suppress object confidence by inverted background confidence.

    Object planes become F_c * (1 - F_bg); the background plane is kept
    unchanged. At a background seed pixel every object plane drops to 0.
    """
    if stack.stage != STAGE_CONFIDENCE:
        raise errors.StageMismatch(
            f"aggregate needs a {STAGE_CONFIDENCE} stack, got {stack.stage}")
    planes = stack.planes.copy()
    suppression = 1.0 - planes[-1]
    planes[:-1] *= suppression
    return FieldStack(planes, STAGE_AGGREGATED, stack.present)
