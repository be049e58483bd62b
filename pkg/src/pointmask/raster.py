"""Core raster and annotation types shared by every pipeline stage.

All containers are immutable after construction (arrays are locked), so they
can be shared freely across parallel workers.

Conventions used throughout the package:
  - coordinates are (x=column, y=row), 0-indexed, top-left origin
  - labels: 0 = ignore, 1..C = object classes, C+1 = background
  - score/field stacks are plane-major: plane index = class_id - 1
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import errors


def _lock(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class RasterImage:
    """H x W x 3 color raster, stored as 8-bit integers."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"expected (H, W, 3) pixel array, got shape {px.shape}")
        if px.dtype != np.uint8:
            raise ValueError(f"expected uint8 pixels, got {px.dtype}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("image must have at least one pixel")
        object.__setattr__(self, "pixels", _lock(px.copy()))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @cached_property
    def normalized(self) -> np.ndarray:
        """Unit-normalized float view; exactly pixels / 255."""
        return _lock(self.pixels.astype(np.float64) / 255.0)


@dataclass(frozen=True)
class PointSet:
    """Sparse annotated points as (class_id, x, y) triples.

    class_id runs 1..C for objects and C+1 for background points.
    Coordinate upper bounds are only checkable against an image, via
    validate_bounds().
    """

    entries: tuple
    num_classes: int

    def __post_init__(self):
        if self.num_classes < 1:
            raise ValueError("num_classes must be >= 1")
        clean = []
        seen = set()
        for entry in self.entries:
            cls, x, y = (int(v) for v in entry)
            if not 1 <= cls <= self.num_classes + 1:
                raise errors.OutOfRange(
                    f"class_id {cls} outside 1..{self.num_classes + 1}")
            if x < 0 or y < 0:
                raise errors.OutOfRange(f"negative coordinate in point ({cls},{x},{y})")
            triple = (cls, x, y)
            if triple in seen:
                raise ValueError(f"duplicate point {triple}")
            seen.add(triple)
            clean.append(triple)
        object.__setattr__(self, "entries", tuple(clean))

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def background_class(self) -> int:
        return self.num_classes + 1

    def present_classes(self) -> tuple:
        """Sorted class ids that have at least one point."""
        return tuple(sorted({cls for cls, _, _ in self.entries}))

    def points_of_class(self, class_id: int) -> list:
        return [(x, y) for cls, x, y in self.entries if cls == class_id]

    def validate_bounds(self, height: int, width: int) -> None:
        for cls, x, y in self.entries:
            if x >= width or y >= height:
                raise errors.OutOfRange(
                    f"point ({cls},{x},{y}) outside {width}x{height} image")


@dataclass(frozen=True)
class ScoreStack:
    """(C+1) x H x W per-class score planes in [0, 1], float32.

    Plane index class_id - 1 holds class class_id; the last plane is the
    background class C+1.
    """

    planes: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.planes, dtype=np.float32)
        if p.ndim != 3:
            raise ValueError(f"expected (C+1, H, W) planes, got shape {p.shape}")
        if p.shape[0] < 2:
            raise ValueError("need at least one object plane plus background")
        if p.shape[1] < 1 or p.shape[2] < 1:
            raise ValueError("empty plane dimensions")
        if not np.isfinite(p).all():
            raise ValueError("scores must be finite")
        if p.min() < 0.0 or p.max() > 1.0:
            raise ValueError("scores must lie in [0, 1]")
        object.__setattr__(self, "planes", _lock(p.copy()))

    @property
    def num_classes(self) -> int:
        return self.planes.shape[0] - 1

    @property
    def height(self) -> int:
        return self.planes.shape[1]

    @property
    def width(self) -> int:
        return self.planes.shape[2]

    def plane(self, class_id: int) -> np.ndarray:
        if not 1 <= class_id <= self.num_classes + 1:
            raise errors.OutOfRange(f"class_id {class_id} out of range")
        return self.planes[class_id - 1]


@dataclass(frozen=True)
class LabelMask:
    """H x W label raster: 0 = ignore, 1..C = objects, C+1 = background."""

    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        lab = np.asarray(self.labels)
        if lab.ndim != 2:
            raise ValueError(f"expected (H, W) labels, got shape {lab.shape}")
        if not np.issubdtype(lab.dtype, np.integer):
            raise ValueError("labels must be integers")
        if self.num_classes < 1:
            raise ValueError("num_classes must be >= 1")
        lab = lab.astype(np.int32)
        if lab.size and (lab.min() < 0 or lab.max() > self.num_classes + 1):
            raise errors.OutOfRange(
                f"labels outside 0..{self.num_classes + 1}")
        object.__setattr__(self, "labels", _lock(lab))

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def background_class(self) -> int:
        return self.num_classes + 1
