"""Confusion-matrix accumulation and mean intersection-over-union.

Ground-truth ignore pixels are skipped entirely. A prediction of ignore on a
labeled pixel is a miss: it lands in a dedicated unlabeled column that folds
into the false negatives, so sparse masks cannot score perfectly by
abstaining.
"""

from __future__ import annotations

import numpy as np

from . import errors
from .raster import LabelMask


class ConfusionMatrix:
    """(C+1) x (C+2) counts: rows ground truth, columns prediction + unlabeled."""

    def __init__(self, num_classes: int):
        if num_classes < 1:
            raise ValueError("num_classes must be >= 1")
        self.num_classes = num_classes
        self.counts = np.zeros((num_classes + 1, num_classes + 2), dtype=np.int64)

    @property
    def unlabeled_column(self) -> int:
        return self.num_classes + 1

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if other.num_classes != self.num_classes:
            raise errors.DimensionMismatch("class counts differ")
        merged = ConfusionMatrix(self.num_classes)
        merged.counts = self.counts + other.counts
        return merged

    def total(self) -> int:
        return int(self.counts.sum())


def accumulate(matrix: ConfusionMatrix, prediction: LabelMask,
               ground_truth: LabelMask) -> ConfusionMatrix:
    """Add one image's pixel counts to the matrix and return it."""
    if prediction.labels.shape != ground_truth.labels.shape:
        raise errors.DimensionMismatch(
            f"prediction {prediction.labels.shape} vs "
            f"ground truth {ground_truth.labels.shape}")
    n = matrix.num_classes
    if prediction.num_classes != n or ground_truth.num_classes != n:
        raise errors.DimensionMismatch("class counts differ from matrix")
    gt = ground_truth.labels.ravel()
    pred = prediction.labels.ravel()
    valid = gt > 0
    rows = gt[valid] - 1
    cols = np.where(pred[valid] > 0, pred[valid] - 1, matrix.unlabeled_column)
    width = n + 2
    flat = np.bincount(rows * width + cols, minlength=(n + 1) * width)
    matrix.counts += flat.reshape(n + 1, width)
    return matrix


def miou(matrix: ConfusionMatrix):
    """Per-class IoU and their mean over classes present in the ground truth.

    Returns (per_class, mean) where per_class maps class_id -> IoU for every
    class with at least one ground-truth pixel.
    """
    if matrix.total() == 0:
        raise errors.EmptyMatrix("no accumulated pixels")
    n = matrix.num_classes
    counts = matrix.counts
    tp = np.diag(counts[:, :n + 1]).astype(np.float64)
    gt_totals = counts.sum(axis=1).astype(np.float64)
    pred_totals = counts[:, :n + 1].sum(axis=0).astype(np.float64)
    fn = gt_totals - tp
    fp = pred_totals - tp
    denom = tp + fp + fn
    per_class = {}
    for cls in range(1, n + 2):
        if gt_totals[cls - 1] > 0:
            d = denom[cls - 1]
            per_class[cls] = float(tp[cls - 1] / d) if d > 0 else 0.0
    mean = float(np.mean(list(per_class.values()))) if per_class else 0.0
    return per_class, mean
