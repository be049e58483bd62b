"""Final pseudo-mask assembly: score-field products, threshold, blots on top."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import errors
from .fields import STAGE_EXPANDED, FieldStack
from .raster import LabelMask, ScoreStack, _lock

PROV_IGNORE = 0
PROV_THRESHOLDED = 1
PROV_BLOT = 2


@dataclass(frozen=True)
class PseudoMask:
    """Label raster plus per-pixel provenance (ignore/thresholded/blot)."""

    labels: LabelMask
    provenance: np.ndarray

    def __post_init__(self):
        prov = np.asarray(self.provenance, dtype=np.uint8)
        if prov.shape != self.labels.labels.shape:
            raise errors.DimensionMismatch("provenance does not match labels")
        if prov.size and prov.max() > PROV_BLOT:
            raise ValueError("invalid provenance tag")
        object.__setattr__(self, "provenance", _lock(prov))


def assemble(refined: ScoreStack, fields: FieldStack, threshold: float = 0.75) -> LabelMask:
    """Threshold the element-wise product of refined scores and fields.

    Every present class (background included) competes in the argmax of
    refined * field; a pixel is labeled when the best product reaches the
    threshold, with ties broken toward the lowest class id. Classes without
    seed points never appear.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    if fields.stage != STAGE_EXPANDED:
        raise errors.StageMismatch(
            f"assemble needs an {STAGE_EXPANDED} stack, got {fields.stage}")
    if (refined.height, refined.width) != (fields.height, fields.width):
        raise errors.DimensionMismatch(
            f"scores {(refined.height, refined.width)} vs "
            f"fields {(fields.height, fields.width)}")
    if refined.num_classes != fields.num_classes:
        raise errors.DimensionMismatch(
            f"scores have {refined.num_classes} classes, fields {fields.num_classes}")

    labels = np.zeros((fields.height, fields.width), dtype=np.int32)
    present = sorted(fields.present)
    if present:
        ids = np.asarray(present, dtype=np.int32)
        products = (refined.planes[ids - 1].astype(np.float64)
                    * fields.planes[ids - 1])
        best = np.argmax(products, axis=0)
        peak = np.max(products, axis=0)
        labels = np.where(peak >= threshold, ids[best], 0).astype(np.int32)
    return LabelMask(labels, fields.num_classes)


def superimpose(intermediate: LabelMask, blots: LabelMask) -> PseudoMask:
    """Overlay blot labels on the thresholded mask.

    Blot pixels always win, including over conflicting classes: blots derive
    from trusted annotations while thresholded labels derive from scores.
    """
    if intermediate.labels.shape != blots.labels.shape:
        raise errors.DimensionMismatch(
            f"mask {intermediate.labels.shape} vs blots {blots.labels.shape}")
    if intermediate.num_classes != blots.num_classes:
        raise errors.DimensionMismatch("class counts differ")
    blot_pixels = blots.labels > 0
    labels = np.where(blot_pixels, blots.labels, intermediate.labels)
    provenance = np.where(
        blot_pixels, PROV_BLOT,
        np.where(intermediate.labels > 0, PROV_THRESHOLDED, PROV_IGNORE),
    ).astype(np.uint8)
    return PseudoMask(LabelMask(labels, intermediate.num_classes), provenance)
