"""Synthetic scenes, a score-map oracle, and a multi-epoch simulation harness.

Scenes are textured geometric shapes on a textured backdrop, with one
interior annotation point per shape and four background points per shape.
The score oracle blends ground-truth one-hot planes with uniform noise,
standing in for a network whose outputs sharpen as training progresses. The
simulator runs the full pipeline and five ablation variants across a
noise/loss schedule and reports per-epoch mean IoU.
"""

from __future__ import annotations

import colorsys
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage

from . import errors, expansion
from .assemble import assemble, superimpose
from .blots import (BLOT_TOLERANCE, BlotConfig, derive_seed, generate_blots,
                    points_mask)
from .evaluate import ConfusionMatrix, accumulate, miou
from .expansion import ExpansionState
from .fields import aggregate, build_confidence_stack
from .pac import DEFAULT_PAC_LAYERS, refine
from .raster import LabelMask, PointSet, RasterImage, ScoreStack
from .walker import DEFAULT_BETA, DEFAULT_MAX_ITERATIONS, DEFAULT_TAU_RW

_SHAPE_KINDS = ("disk", "rectangle", "ellipse")

# The ten-epoch desk-scale schedule accumulates far less expansion than a
# full training run, so the simulator thresholds products lower than the
# production default of 0.75; see SimulationConfig.
SIM_THRESHOLD = 0.32

VARIANTS = ("points-only", "blots-only", "fields-only", "fields+blots",
            "fields+refiner", "full")

# Signed channel patterns for the auto palette: class colors sit around the
# gray backdrop at a controlled contrast so the walker stays diffusive
# instead of flood-filling whole shapes.
_COLOR_PATTERNS = ((1, -1, -1), (-1, -1, 1), (-1, 1, -1),
                   (1, 1, -1), (1, -1, 1), (-1, 1, 1))


def _auto_colors(num_classes: int, base, contrast: float):
    if num_classes <= len(_COLOR_PATTERNS):
        return tuple(
            tuple(b + s * contrast for b, s in zip(base, _COLOR_PATTERNS[c]))
            for c in range(num_classes))
    colors = []
    for c in range(num_classes):
        hue = c / num_classes
        value = 0.85 if c % 2 == 0 else 0.6
        colors.append(tuple(colorsys.hsv_to_rgb(hue, 0.8, value)))
    return tuple(colors)


def _color_distance(a, b) -> float:
    return math.sqrt(sum((x - y) ** 2 for x, y in zip(a, b)))


@dataclass(frozen=True)
class SceneSpec:
    """Parameters of the random scene generator.

    The defaults describe a wide strip with two large, gently textured
    shapes whose colors sit close to the gray backdrop. That geometry keeps
    the random walker diffusive (partial, high-precision blots) and leaves
    the deep refinement layers enough resolution to preserve object
    evidence.
    """

    height: int = 48
    width: int = 192
    num_classes: int = 2
    shapes_per_class: int = 1
    radius_range: tuple = (0.30, 0.42)   # fraction of min(H, W)
    noise_amplitude: float = 0.14
    background_noise: float = 0.14
    min_color_distance: float = 0.1
    color_contrast: float = 0.11         # auto-palette offset from the backdrop
    class_colors: tuple | None = None
    background_color: tuple = (0.5, 0.5, 0.5)
    background_clearance: float = 0.2    # min distance of bg points to any shape
    rng_seed: int = 0
    max_placement_attempts: int = 200

    def __post_init__(self):
        if min(self.height, self.width) < 16:
            raise ValueError("scene must be at least 16x16")
        if self.num_classes < 1 or self.shapes_per_class < 1:
            raise ValueError("need at least one class and one shape per class")
        lo, hi = self.radius_range
        if not 0.0 < lo <= hi < 0.5:
            raise ValueError("radius_range fractions must satisfy 0 < lo <= hi < 0.5")
        for amp in (self.noise_amplitude, self.background_noise):
            if not 0.0 <= amp <= 1.0:
                raise ValueError("noise amplitudes must lie in [0, 1]")
        colors = self.resolved_colors()
        everything = colors + (tuple(self.background_color),)
        for i in range(len(everything)):
            for j in range(i + 1, len(everything)):
                if _color_distance(everything[i], everything[j]) < self.min_color_distance:
                    raise ValueError(
                        f"colors {i} and {j} closer than {self.min_color_distance}")

    def resolved_colors(self) -> tuple:
        if self.class_colors is not None:
            if len(self.class_colors) != self.num_classes:
                raise ValueError("need one color per class")
            return tuple(tuple(c) for c in self.class_colors)
        return _auto_colors(self.num_classes, self.background_color,
                            self.color_contrast)


@dataclass(frozen=True)
class Scene:
    image: RasterImage
    ground_truth: LabelMask
    points: PointSet


def _rasterize(kind, cy, cx, ry, rx, yy, xx):
    if kind == "disk":
        return (yy - cy) ** 2 + (xx - cx) ** 2 <= ry * ry
    if kind == "rectangle":
        return (np.abs(yy - cy) <= ry) & (np.abs(xx - cx) <= rx)
    return ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0


def gen_scene(spec: SceneSpec) -> Scene:
    """Render one scene: image, dense ground truth, and annotation points."""
    rng = np.random.default_rng(spec.rng_seed)
    h, w = spec.height, spec.width
    min_dim = min(h, w)
    lo, hi = spec.radius_range
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    background = spec.num_classes + 1
    gt = np.full((h, w), background, dtype=np.int32)

    placed = []  # (class_id, kind, cy, cx, ry, rx, pixel mask)
    for cls in range(1, spec.num_classes + 1):
        for _ in range(spec.shapes_per_class):
            for _attempt in range(spec.max_placement_attempts):
                kind = _SHAPE_KINDS[int(rng.integers(0, len(_SHAPE_KINDS)))]
                ry = rng.uniform(lo, hi) * min_dim
                rx = ry if kind == "disk" else rng.uniform(lo, hi) * min_dim
                reach = max(ry, rx)
                if reach + 2.0 >= min(h, w) / 2.0:
                    continue
                cy = rng.uniform(reach + 1.0, h - 2.0 - reach)
                cx = rng.uniform(reach + 1.0, w - 2.0 - reach)
                ok = all(
                    math.hypot(cy - ocy, cx - ocx) >= reach + max(ory, orx) + 2.0
                    for _, _, ocy, ocx, ory, orx, _ in placed)
                if not ok:
                    continue
                mask = _rasterize(kind, cy, cx, ry, rx, yy, xx)
                if not mask.any():
                    continue
                placed.append((cls, kind, cy, cx, ry, rx, mask))
                gt[mask] = cls
                break
            else:
                raise errors.PlacementFailure(
                    f"could not place shape for class {cls} after "
                    f"{spec.max_placement_attempts} attempts")

    # paint the image: textured backdrop first, shapes in placement order
    image = np.empty((h, w, 3), dtype=np.float64)
    image[:] = spec.background_color
    if spec.background_noise > 0.0:
        image += rng.uniform(-spec.background_noise, spec.background_noise, (h, w, 3))
    else:
        rng.uniform(-1.0, 1.0, (h, w, 3))  # keep the stream layout fixed
    colors = spec.resolved_colors()
    for cls, _, _, _, _, _, mask in placed:
        count = int(mask.sum())
        patch = np.tile(np.asarray(colors[cls - 1]), (count, 1))
        if spec.noise_amplitude > 0.0:
            patch += rng.uniform(-spec.noise_amplitude, spec.noise_amplitude, (count, 3))
        else:
            rng.uniform(-1.0, 1.0, (count, 3))
        image[mask] = patch
    pixels = np.floor(np.clip(image, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)

    # one interior point per shape: the shape pixel closest to its centroid
    entries = []
    for cls, _, _, _, _, _, mask in placed:
        ys, xs = np.nonzero(mask)
        cy_bar, cx_bar = ys.mean(), xs.mean()
        nearest = np.argmin((ys - cy_bar) ** 2 + (xs - cx_bar) ** 2)
        entries.append((cls, int(xs[nearest]), int(ys[nearest])))

    # four background points per shape, uniform over background pixels at
    # least `background_clearance` away from every shape (annotators click
    # clearly-background spots); the clearance halves until enough pixels
    # qualify
    needed = 4 * len(placed)
    shape_distance = ndimage.distance_transform_edt(gt == background)
    clearance = spec.background_clearance * min_dim
    while True:
        bg_flat = np.flatnonzero((gt.ravel() == background)
                                 & (shape_distance.ravel() >= clearance))
        if bg_flat.size >= needed:
            break
        if clearance < 1.0:
            raise errors.PlacementFailure("not enough background pixels for points")
        clearance /= 2.0
    chosen = rng.choice(bg_flat, size=needed, replace=False)
    for idx in chosen:
        entries.append((background, int(idx % w), int(idx // w)))

    return Scene(RasterImage(pixels), LabelMask(gt, spec.num_classes),
                 PointSet(tuple(entries), spec.num_classes))


def make_scene_set(count: int, master_seed: int, base: SceneSpec) -> list:
    """Generate `count` scenes with seeds derived from one master seed."""
    scenes = []
    for i in range(count):
        spec = replace(base, rng_seed=derive_seed(master_seed, f"scene/{i}"))
        scenes.append(gen_scene(spec))
    return scenes


def oracle_scores(ground_truth: LabelMask, noise_level: float,
                  rng: np.random.Generator) -> ScoreStack:
    """Ground-truth one-hot planes blended with uniform noise.

    s = (1 - noise) * onehot + noise * U(0,1), then renormalized per pixel to
    sum at most 1.
    """
    noise = float(noise_level)
    if not 0.0 <= noise <= 1.0:
        raise ValueError(f"noise_level must lie in [0, 1], got {noise_level}")
    nplanes = ground_truth.num_classes + 1
    labels = ground_truth.labels
    onehot = (labels[None, :, :] ==
              np.arange(1, nplanes + 1)[:, None, None]).astype(np.float64)
    planes = (1.0 - noise) * onehot + noise * rng.random((nplanes,) + labels.shape)
    planes /= np.maximum(1.0, planes.sum(axis=0))
    return ScoreStack(planes)


def cross_entropy(scores: ScoreStack, ground_truth: LabelMask) -> float:
    """Mean -log score of the true class over labeled pixels."""
    labels = ground_truth.labels
    valid = labels > 0
    if not valid.any():
        raise errors.EmptyMatrix("ground truth is entirely ignore")
    planes = scores.planes.astype(np.float64)
    ys, xs = np.nonzero(valid)
    true_scores = planes[labels[valid] - 1, ys, xs]
    return float(np.mean(-np.log(np.maximum(true_scores, 1e-12))))


@dataclass(frozen=True)
class EpochSchedule:
    """Per-epoch score noise (non-increasing) and loss scalars.

    loss=None selects the auto schedule: each epoch's loss is the mean
    cross-entropy of that epoch's oracle scores against the ground truth.
    """

    score_noise: tuple
    loss: tuple | None = None

    def __post_init__(self):
        noise = tuple(float(v) for v in self.score_noise)
        if not noise:
            raise ValueError("schedule needs at least one epoch")
        if any(not 0.0 <= v <= 1.0 for v in noise):
            raise ValueError("score noise must lie in [0, 1]")
        if any(b > a for a, b in zip(noise, noise[1:])):
            raise ValueError("score noise must be non-increasing")
        object.__setattr__(self, "score_noise", noise)
        if self.loss is not None:
            loss = tuple(float(v) for v in self.loss)
            if len(loss) != len(noise):
                raise ValueError("loss sequence length must match epochs")
            if any(v <= 0.0 for v in loss):
                raise ValueError("losses must be positive")
            object.__setattr__(self, "loss", loss)

    @property
    def epochs(self) -> int:
        return len(self.score_noise)

    @staticmethod
    def linear(epochs: int, noise_start: float = 0.95, noise_end: float = 0.92,
               halving_losses: bool = True) -> "EpochSchedule":
        """Linearly decreasing noise; losses halve every epoch by default.

        The narrow default noise band stands in for a network that is still
        early in training at desk scale, which is the regime where the
        refinement and blot machinery carries the pseudo-mask.
        """
        noise = tuple(np.linspace(noise_start, noise_end, epochs))
        loss = tuple(2.0 ** (-e) for e in range(epochs)) if halving_losses else None
        return EpochSchedule(noise, loss)


@dataclass(frozen=True)
class SimulationConfig:
    """Pipeline knobs used by the simulator."""

    threshold: float = SIM_THRESHOLD
    variant: str = "exp-ratio"
    layers: tuple = DEFAULT_PAC_LAYERS
    eta: float = expansion.DEFAULT_ETA
    omega: float = expansion.DEFAULT_OMEGA
    blot_iterations: int = 5
    kld_threshold: float = 0.5
    iou_threshold: float = 0.3
    beta: float = DEFAULT_BETA
    tau_rw: float = DEFAULT_TAU_RW
    tolerance: float = BLOT_TOLERANCE
    max_iterations: int = DEFAULT_MAX_ITERATIONS


@dataclass(frozen=True)
class EpochRow:
    epoch: int
    variant: str
    mean_miou: float
    object_score: float
    background_score: float


def _scene_miou(predicted: LabelMask, ground_truth: LabelMask) -> float:
    matrix = ConfusionMatrix(ground_truth.num_classes)
    accumulate(matrix, predicted, ground_truth)
    return miou(matrix)[1]


def simulate_epochs(scenes, schedule: EpochSchedule,
                    config: SimulationConfig = SimulationConfig(),
                    master_seed: int = 0) -> list:
    """Run every ablation variant across the schedule; returns EpochRow list.

    Variants that drop point blots fall back to raw points; variants that
    drop the refiner threshold raw scores. Expansion state is shared across
    scenes and advances once per epoch from the scheduled loss.
    """
    scenes = list(scenes)
    if not scenes:
        raise ValueError("need at least one scene")

    aggregated = []
    blot_masks = []
    point_masks = []
    for i, scene in enumerate(scenes):
        h, w = scene.image.height, scene.image.width
        aggregated.append(aggregate(build_confidence_stack(scene.points, h, w)))
        blot_cfg = BlotConfig(
            iterations=config.blot_iterations,
            kld_threshold=config.kld_threshold,
            iou_threshold=config.iou_threshold,
            rng_seed=derive_seed(master_seed, f"blots/{i}"),
        )
        blot_masks.append(generate_blots(
            scene.image, scene.points, blot_cfg, beta=config.beta,
            tau_rw=config.tau_rw, tolerance=config.tolerance,
            max_iterations=config.max_iterations))
        point_masks.append(points_mask(scene.points, h, w))

    state = ExpansionState(eta=config.eta, omega=config.omega)
    rows = []
    for epoch_index, noise in enumerate(schedule.score_noise):
        epoch = epoch_index + 1
        scores = [
            oracle_scores(scene.ground_truth, noise,
                          np.random.default_rng(
                              derive_seed(master_seed, f"scores/{epoch}/{i}")))
            for i, scene in enumerate(scenes)
        ]
        if schedule.loss is not None:
            loss = schedule.loss[epoch_index]
        else:
            loss = float(np.mean([
                cross_entropy(s, scene.ground_truth)
                for s, scene in zip(scores, scenes)]))
        state = expansion.update(state, loss)

        sums = dict.fromkeys(VARIANTS, 0.0)
        for i, scene in enumerate(scenes):
            expanded = expansion.apply(aggregated[i], state)
            refined = refine(scores[i], scene.image, config.layers, config.variant)
            raw_masks = {
                "points-only": point_masks[i],
                "blots-only": blot_masks[i],
                "fields-only": superimpose(
                    assemble(scores[i], expanded, config.threshold),
                    point_masks[i]).labels,
                "fields+blots": superimpose(
                    assemble(scores[i], expanded, config.threshold),
                    blot_masks[i]).labels,
                "fields+refiner": superimpose(
                    assemble(refined, expanded, config.threshold),
                    point_masks[i]).labels,
                "full": superimpose(
                    assemble(refined, expanded, config.threshold),
                    blot_masks[i]).labels,
            }
            for variant in VARIANTS:
                sums[variant] += _scene_miou(raw_masks[variant], scene.ground_truth)
        for variant in VARIANTS:
            rows.append(EpochRow(epoch, variant, sums[variant] / len(scenes),
                                 state.object_score, state.background_score))
    return rows
