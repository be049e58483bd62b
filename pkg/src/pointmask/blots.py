"""Point blots: scatter-then-walk augmentation of point annotations.

Starting from the thresholded walker mask of the original points, each
iteration perturbs the points with one random affine transform (rotation
about the image center plus translation, both sampled from ranges that grow
linearly with the iteration index), walks the perturbed seeds, and unions
candidate blobs into the current blots when their color distribution stays
close (symmetric KL divergence below phi) and they overlap enough
(IoU above delta). Blots only ever grow.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import errors
from .raster import LabelMask, PointSet, RasterImage
from .walker import (DEFAULT_BETA, DEFAULT_MAX_ITERATIONS, DEFAULT_TAU_RW,
                     WalkerProblem, solve_walker, walker_mask)

_FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=np.int8)
HISTOGRAM_SMOOTHING = 1e-6

# Blot masks are thresholded at tau_rw, so residuals far below the threshold
# sensitivity cannot change a label; a looser bound than the walker default
# saves a large share of the conjugate-gradient iterations.
BLOT_TOLERANCE = 1e-6


@dataclass(frozen=True)
class BlotConfig:
    """Perturb-and-walk schedule plus acceptance thresholds."""

    iterations: int = 5
    kld_threshold: float = 0.5
    iou_threshold: float = 0.3
    rotation_base: float = 5.0      # degrees per iteration step
    translation_base: float = 0.02  # fraction of min(H, W) per step
    histogram_bins: int = 32
    rng_seed: int = 0

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.kld_threshold <= 0.0:
            raise ValueError("kld_threshold must be positive")
        if not 0.0 < self.iou_threshold < 1.0:
            raise ValueError("iou_threshold must lie in (0, 1)")
        if self.rotation_base <= 0.0 or self.translation_base <= 0.0:
            raise ValueError("perturbation bases must be positive")
        if self.histogram_bins < 1:
            raise ValueError("histogram_bins must be >= 1")


@dataclass(frozen=True)
class Blob:
    """One 4-connected component of a single class.

    pixels: sorted flat indices (row * W + col); provenance: indices of the
    originating annotation points whose (possibly perturbed) position lies in
    the component.
    """

    class_id: int
    pixels: np.ndarray
    provenance: frozenset

    def __post_init__(self):
        object.__setattr__(self, "pixels", np.asarray(self.pixels, dtype=np.int64))
        object.__setattr__(self, "provenance", frozenset(self.provenance))

    def __len__(self):
        return int(self.pixels.size)


@dataclass(frozen=True)
class BlobSet:
    blobs: tuple

    def __iter__(self):
        return iter(self.blobs)

    def __len__(self):
        return len(self.blobs)

    def of_class(self, class_id: int):
        return [b for b in self.blobs if b.class_id == class_id]


def derive_seed(master_seed: int, key: str) -> int:
    """Stable per-item RNG stream id, independent of process or platform."""
    digest = hashlib.sha256(f"{master_seed}|{key}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def _sample_affine(height, width, iteration, config, rng):
    """Draw (angle_deg, dx, dy); the stream order is fixed: angle, dx, dy."""
    max_angle = iteration * config.rotation_base
    max_shift = iteration * config.translation_base * min(height, width)
    angle = rng.uniform(-max_angle, max_angle)
    dx = rng.uniform(-max_shift, max_shift)
    dy = rng.uniform(-max_shift, max_shift)
    return angle, dx, dy


def _apply_affine(entries, angle_deg, dx, dy, height, width):
    """Rotate about the image center, translate, round, drop out-of-bounds.

    Returns (kept entries, parallel original indices). Duplicate landing
    positions keep the first arrival so the result is a valid point set.
    """
    theta = math.radians(angle_deg)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    cx, cy = (width - 1) / 2.0, (height - 1) / 2.0
    kept, origins, seen = [], [], set()
    for index, (cls, x, y) in enumerate(entries):
        rx = cos_t * (x - cx) - sin_t * (y - cy) + cx + dx
        ry = sin_t * (x - cx) + cos_t * (y - cy) + cy + dy
        xi = int(math.floor(rx + 0.5))
        yi = int(math.floor(ry + 0.5))
        if not (0 <= xi < width and 0 <= yi < height):
            continue
        triple = (cls, xi, yi)
        if triple in seen:
            continue
        seen.add(triple)
        kept.append(triple)
        origins.append(index)
    return kept, origins


def perturb_points(points: PointSet, height: int, width: int, iteration: int,
                   config: BlotConfig, rng: np.random.Generator) -> PointSet:
    """One random affine perturbation of the whole point set.

    The rotation angle and each translation component are uniform over
    ranges proportional to the iteration index; points that land outside the
    image are discarded for this iteration (an empty result is allowed).
    """
    if iteration < 1:
        raise ValueError("iteration must be >= 1")
    angle, dx, dy = _sample_affine(height, width, iteration, config, rng)
    kept, _ = _apply_affine(points.entries, angle, dx, dy, height, width)
    return PointSet(tuple(kept), points.num_classes)


def connected_components(mask: LabelMask, points=None, origins=None) -> BlobSet:
    """Partition every labeled class of a mask into 4-connected blobs.

    When `points` is given, each blob's provenance collects the indices of
    the points sitting inside it (indices into `origins` when provided,
    otherwise positional indices into `points`).
    """
    labels = mask.labels
    width = mask.width
    point_list = list(points) if points is not None else []
    if origins is None:
        origins = list(range(len(point_list)))
    blobs = []
    for cls in np.unique(labels[labels > 0]):
        comp, count = ndimage.label(labels == cls, structure=_FOUR_CONNECTED)
        if count == 0:
            continue
        flat = np.flatnonzero(labels.ravel() == cls)
        comp_of = comp.ravel()[flat]
        order = np.argsort(comp_of, kind="stable")
        flat = flat[order]
        comp_of = comp_of[order]
        bounds = np.searchsorted(comp_of, np.arange(1, count + 2))
        provenance = [set() for _ in range(count)]
        for origin, (pcls, x, y) in zip(origins, point_list):
            if pcls == cls and labels[y, x] == cls:
                provenance[comp[y, x] - 1].add(origin)
        for i in range(count):
            blobs.append(Blob(int(cls), flat[bounds[i]:bounds[i + 1]],
                              frozenset(provenance[i])))
    return BlobSet(tuple(blobs))


def _channel_histograms(image: RasterImage, blob: Blob, bins: int):
    values = image.normalized.reshape(-1, 3)[blob.pixels]
    hists = np.empty((3, bins))
    for ch in range(3):
        hists[ch] = np.histogram(values[:, ch], bins=bins, range=(0.0, 1.0))[0]
    hists += HISTOGRAM_SMOOTHING
    return hists / hists.sum(axis=1, keepdims=True)


def blob_divergence(image: RasterImage, blob_a: Blob, blob_b: Blob,
                    bins: int = 32) -> float:
    """Symmetrized KL divergence between the blobs' color histograms.

    Per-channel histograms over [0, 1] get additive smoothing before
    normalization; the result sums 0.5*(KL(P||Q) + KL(Q||P)) over channels.
    """
    if len(blob_a) == 0 or len(blob_b) == 0:
        raise errors.EmptyBlob("cannot compare an empty blob")
    pa = _channel_histograms(image, blob_a, bins)
    pb = _channel_histograms(image, blob_b, bins)
    forward = (pa * np.log(pa / pb)).sum()
    backward = (pb * np.log(pb / pa)).sum()
    return float(0.5 * (forward + backward))


def accept_candidate(image: RasterImage, current: Blob, candidate: Blob,
                     kld_threshold: float, iou_threshold: float,
                     bins: int = 32) -> bool:
    """Accept a candidate blob as an expansion of its current blob.

    Requires color-distribution divergence below kld_threshold and overlap
    IoU above iou_threshold; disjoint candidates are always rejected.
    """
    if len(current) == 0 or len(candidate) == 0:
        return False
    inter = np.intersect1d(current.pixels, candidate.pixels, assume_unique=True).size
    union = len(current) + len(candidate) - inter
    if inter / union <= iou_threshold:
        return False
    return blob_divergence(image, current, candidate, bins) < kld_threshold


def iter_blot_masks(image: RasterImage, points: PointSet, config: BlotConfig,
                    beta: float = DEFAULT_BETA, tau_rw: float = DEFAULT_TAU_RW,
                    tolerance: float = BLOT_TOLERANCE,
                    max_iterations: int = DEFAULT_MAX_ITERATIONS):
    """Yield the blot mask after initialization and after every iteration.

    Yields iterations+1 masks; labels are only ever added, never removed, so
    consecutive masks grow monotonically.
    """
    points.validate_bounds(image.height, image.width)
    rng = np.random.default_rng(config.rng_seed)
    h, w = image.height, image.width

    def walk(seed_points):
        problem = WalkerProblem(image, seed_points, beta=beta,
                                tolerance=tolerance, max_iterations=max_iterations)
        return walker_mask(solve_walker(problem), tau_rw)

    current = walk(points).labels.copy()
    yield LabelMask(current, points.num_classes)

    for step in range(1, config.iterations + 1):
        # the RNG stream advances every iteration, whether or not the
        # perturbed set survives
        angle, dx, dy = _sample_affine(h, w, step, config, rng)
        kept, origins = _apply_affine(points.entries, angle, dx, dy, h, w)
        if kept:
            perturbed = PointSet(tuple(kept), points.num_classes)
            candidate_mask = walk(perturbed)
            current_blobs = connected_components(
                LabelMask(current, points.num_classes), points)
            candidate_blobs = connected_components(candidate_mask, perturbed, origins)
            flat = current.ravel()
            for blob in current_blobs:
                if not blob.provenance:
                    continue
                for cand in candidate_blobs.of_class(blob.class_id):
                    if not (blob.provenance & cand.provenance):
                        continue
                    if accept_candidate(image, blob, cand, config.kld_threshold,
                                        config.iou_threshold, config.histogram_bins):
                        # cross-class collisions: earlier labels win
                        free = cand.pixels[flat[cand.pixels] == 0]
                        flat[free] = blob.class_id
        yield LabelMask(current.copy(), points.num_classes)


def generate_blots(image: RasterImage, points: PointSet, config: BlotConfig,
                   beta: float = DEFAULT_BETA, tau_rw: float = DEFAULT_TAU_RW,
                   tolerance: float = BLOT_TOLERANCE,
                   max_iterations: int = DEFAULT_MAX_ITERATIONS) -> LabelMask:
    """Final blot mask: superset of the seed pixels, deterministic per seed."""
    mask = None
    for mask in iter_blot_masks(image, points, config, beta=beta, tau_rw=tau_rw,
                                tolerance=tolerance, max_iterations=max_iterations):
        pass
    return mask


def points_mask(points: PointSet, height: int, width: int) -> LabelMask:
    """Degenerate mask that labels exactly the annotated pixels."""
    points.validate_bounds(height, width)
    labels = np.zeros((height, width), dtype=np.int32)
    for cls, x, y in points:
        labels[y, x] = cls
    return LabelMask(labels, points.num_classes)
