"""Expansion confidence scores driven by the epoch-loss trajectory.

The scores are unbounded accumulators updated once per epoch from the loss
improvement ratio; clipping to [0, 1] happens only when a score is added to
an aggregated field stack. The object score steps twice as fast as the
background score.

Accumulation is exact: steps are summed as rationals so that e identical
steps of size s yield exactly e*s (repeated float addition drifts after a
handful of epochs). The state file stores the scores as exact fractions;
plain decimals are accepted on load.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction

import numpy as np

from . import errors
from .fields import STAGE_AGGREGATED, STAGE_EXPANDED, FieldStack

DEFAULT_ETA = 0.025
DEFAULT_OMEGA = -0.025


@dataclass(frozen=True)
class ExpansionState:
    """Accumulated expansion scores plus the previous epoch's loss."""

    eta: float = DEFAULT_ETA
    omega: float = DEFAULT_OMEGA
    exact_object: Fraction = Fraction(0)
    exact_background: Fraction = Fraction(0)
    previous_loss: float | None = None

    def __post_init__(self):
        if not self.omega <= 0.0 <= self.eta:
            raise ValueError(f"need omega <= 0 <= eta, got {self.omega}, {self.eta}")
        object.__setattr__(self, "exact_object", Fraction(self.exact_object))
        object.__setattr__(self, "exact_background", Fraction(self.exact_background))

    @property
    def object_score(self) -> float:
        return float(self.exact_object)

    @property
    def background_score(self) -> float:
        return float(self.exact_background)


def update(state: ExpansionState, epoch_loss: float) -> ExpansionState:
    """Fold one epoch loss into the state.

    The first call only records the loss; afterwards each call adds
    clamp(previous/current - 1, [omega, eta]) to the object score and half
    that to the background score, keeping object = 2 * background exactly.
    """
    loss = float(epoch_loss)
    if not math.isfinite(loss) or loss <= 0.0:
        raise errors.NonPositiveLoss(f"epoch loss must be positive, got {epoch_loss}")
    if state.previous_loss is None:
        return replace(state, previous_loss=loss)
    gamma = state.previous_loss / loss - 1.0
    step = Fraction(max(min(gamma, state.eta), state.omega))
    return replace(
        state,
        exact_object=state.exact_object + step,
        exact_background=state.exact_background + step / 2,
        previous_loss=loss,
    )


def apply(stack: FieldStack, state: ExpansionState) -> FieldStack:
    """Add the scores to an aggregated stack and clip to [0, 1].

    Only planes of present classes move; absent planes stay untouched so a
    class with no seeds can never gain confidence from expansion alone.
    """
    if stack.stage != STAGE_AGGREGATED:
        raise errors.StageMismatch(
            f"apply needs a {STAGE_AGGREGATED} stack, got {stack.stage}")
    planes = stack.planes.copy()
    background = stack.background_class
    for cls in stack.present:
        score = state.background_score if cls == background else state.object_score
        planes[cls - 1] = np.clip(planes[cls - 1] + score, 0.0, 1.0)
    return FieldStack(planes, STAGE_EXPANDED, stack.present)


def save_state(path, state: ExpansionState) -> None:
    """Serialize as `object_score background_score previous_loss` plain text."""
    prev = "none" if state.previous_loss is None else repr(state.previous_loss)
    text = f"{state.exact_object} {state.exact_background} {prev}\n"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def load_state(path, eta: float = DEFAULT_ETA, omega: float = DEFAULT_OMEGA) -> ExpansionState:
    with open(path, "r", encoding="utf-8") as fh:
        parts = fh.read().split()
    if len(parts) != 3:
        raise errors.ParseError(f"{path}: expected 3 fields, got {len(parts)}")
    try:
        obj, bg = Fraction(parts[0]), Fraction(parts[1])
        prev = None if parts[2] == "none" else float(parts[2])
    except (ValueError, ZeroDivisionError) as exc:
        raise errors.ParseError(f"{path}: malformed state file") from exc
    return ExpansionState(eta=eta, omega=omega, exact_object=obj,
                          exact_background=bg, previous_loss=prev)
