"""Color overlays and heatmaps for visual inspection of masks and fields."""

from __future__ import annotations

import numpy as np

from . import errors
from .raster import LabelMask, RasterImage

# Fixed 21-entry class palette, shipped in-repo so rendered diffs are stable.
PALETTE = (
    (230, 25, 75), (60, 180, 75), (255, 225, 25), (0, 130, 200),
    (245, 130, 48), (145, 30, 180), (70, 240, 240), (240, 50, 230),
    (210, 245, 60), (250, 190, 212), (0, 128, 128), (220, 190, 255),
    (170, 110, 40), (255, 250, 200), (128, 0, 0), (170, 255, 195),
    (128, 128, 0), (255, 215, 180), (0, 0, 128), (128, 128, 128),
    (255, 105, 180),
)
BACKGROUND_TINT = (64, 64, 64)  # dark gray for the background class

HEATMAP_LOW = (0, 0, 32)
HEATMAP_HIGH = (255, 255, 255)


def class_color(class_id: int, num_classes: int, palette=PALETTE):
    if class_id == num_classes + 1:
        return BACKGROUND_TINT
    return palette[(class_id - 1) % len(palette)]


def render_overlay(image: RasterImage, mask: LabelMask, palette=PALETTE,
                   alpha: float = 0.5) -> np.ndarray:
    """Alpha-blend class tints over the image; ignore pixels stay untouched.

    Returns an (H, W, 4) uint8 RGBA raster with a fully opaque alpha channel.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    if (image.height, image.width) != (mask.height, mask.width):
        raise errors.DimensionMismatch(
            f"image {(image.height, image.width)} vs mask {(mask.height, mask.width)}")
    lut = np.zeros((mask.num_classes + 2, 3), dtype=np.float64)
    for cls in range(1, mask.num_classes + 2):
        lut[cls] = class_color(cls, mask.num_classes, palette)
    tint = lut[mask.labels]
    base = image.pixels.astype(np.float64)
    blended = np.where((mask.labels > 0)[..., None],
                       (1.0 - alpha) * base + alpha * tint, base)
    out = np.empty((mask.height, mask.width, 4), dtype=np.uint8)
    out[..., :3] = np.floor(blended + 0.5).astype(np.uint8)
    out[..., 3] = 255
    return out


def render_heatmap(plane) -> np.ndarray:
    """Map a [0, 1] plane through a monotone two-point color gradient."""
    values = np.asarray(plane, dtype=np.float64)
    if values.ndim != 2:
        raise ValueError(f"expected (H, W) plane, got shape {values.shape}")
    if not np.isfinite(values).all() or values.min() < 0.0 or values.max() > 1.0:
        raise errors.OutOfRange("heatmap input must lie in [0, 1]")
    low = np.asarray(HEATMAP_LOW, dtype=np.float64)
    high = np.asarray(HEATMAP_HIGH, dtype=np.float64)
    rgb = low[None, None, :] + values[..., None] * (high - low)[None, None, :]
    return np.floor(rgb + 0.5).astype(np.uint8)
