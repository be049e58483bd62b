"""pointmask: pseudo-mask synthesis from point annotations.

Converts sparse point annotations plus per-class score maps into
supervision-quality segmentation masks via confidence fields grown by an
epoch-loss-driven expansion schedule, a parameter-free pixel-adaptive
refinement of the scores, and point blots produced by perturb-and-walk
augmentation over the image graph.
"""

__version__ = "0.1.0"

from . import errors
from .assemble import PROV_BLOT, PROV_IGNORE, PROV_THRESHOLDED, PseudoMask, assemble, superimpose
from .blots import (Blob, BlobSet, BlotConfig, accept_candidate, blob_divergence,
                    connected_components, derive_seed, generate_blots,
                    iter_blot_masks, perturb_points, points_mask)
from .evaluate import ConfusionMatrix, accumulate, miou
from .expansion import ExpansionState, load_state, save_state
from .fields import (FieldStack, aggregate, build_confidence_stack,
                     build_distance_stack, compute_distance_field, to_confidence)
from .formats import (read_image, read_mask, read_pmsm, read_points,
                      read_score_stack, write_image, write_mask, write_pmsm,
                      write_points, write_score_stack)
from .overlay import PALETTE, render_heatmap, render_overlay
from .pac import (DEFAULT_PAC_LAYERS, PacLayerSpec, compute_kernel, pac_layer,
                  refine, refine_planes)
from .pipeline import PipelineConfig, synthesize
from .raster import LabelMask, PointSet, RasterImage, ScoreStack
from .synthetic import (EpochSchedule, Scene, SceneSpec, SimulationConfig,
                        gen_scene, make_scene_set, oracle_scores, simulate_epochs)
from .walker import ProbabilityStack, WalkerProblem, solve_walker, walker_mask

__all__ = [name for name in dir() if not name.startswith("_")]
