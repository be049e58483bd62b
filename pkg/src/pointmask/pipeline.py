"""End-to-end pseudo-mask synthesis shared by the CLI and the simulator."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

from . import errors, expansion
from .assemble import PseudoMask, assemble, superimpose
from .blots import BLOT_TOLERANCE, BlotConfig, generate_blots
from .expansion import ExpansionState
from .fields import aggregate, build_confidence_stack
from .pac import DEFAULT_PAC_LAYERS, refine
from .raster import PointSet, RasterImage, ScoreStack
from .walker import DEFAULT_BETA, DEFAULT_MAX_ITERATIONS, DEFAULT_TAU_RW

DEFAULT_THRESHOLD = 0.75


@dataclass(frozen=True)
class PipelineConfig:
    """Resolved knobs for one synthesis run."""

    threshold: float = DEFAULT_THRESHOLD
    variant: str = "exp-ratio"
    layers: tuple = DEFAULT_PAC_LAYERS
    blot: BlotConfig = field(default_factory=BlotConfig)
    beta: float = DEFAULT_BETA
    tau_rw: float = DEFAULT_TAU_RW
    tolerance: float = BLOT_TOLERANCE
    max_iterations: int = DEFAULT_MAX_ITERATIONS

    def with_seed(self, rng_seed: int) -> "PipelineConfig":
        return replace(self, blot=replace(self.blot, rng_seed=rng_seed))


def synthesize(image: RasterImage, points: PointSet, scores: ScoreStack,
               state: ExpansionState, config: PipelineConfig,
               timings: dict | None = None) -> PseudoMask:
    """Blots -> fields -> expansion -> refinement -> threshold -> overlay.

    When `timings` is a dict it receives per-stage wall-clock seconds under
    the keys 'blots' and 'rest'.
    """
    if (scores.height, scores.width) != (image.height, image.width):
        raise errors.DimensionMismatch(
            f"scores {(scores.height, scores.width)} vs "
            f"image {(image.height, image.width)}")
    if scores.num_classes != points.num_classes:
        raise errors.DimensionMismatch(
            f"scores carry {scores.num_classes} classes, "
            f"points {points.num_classes}")
    points.validate_bounds(image.height, image.width)

    start = time.perf_counter()
    blot_mask = generate_blots(image, points, config.blot, beta=config.beta,
                               tau_rw=config.tau_rw, tolerance=config.tolerance,
                               max_iterations=config.max_iterations)
    blot_elapsed = time.perf_counter() - start

    start = time.perf_counter()
    fields_stack = expansion.apply(
        aggregate(build_confidence_stack(points, image.height, image.width)), state)
    refined = refine(scores, image, config.layers, config.variant)
    intermediate = assemble(refined, fields_stack, config.threshold)
    result = superimpose(intermediate, blot_mask)
    rest_elapsed = time.perf_counter() - start

    if timings is not None:
        timings["blots"] = blot_elapsed
        timings["rest"] = rest_elapsed
    return result
