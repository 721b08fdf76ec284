"""Staged relaxation of response-length and turn limits.

Stage 1 caps responses at 16K tokens and 5 tool turns. Once the mean
response length has stabilized (relative spread of the last W batch means
within stability_epsilon), the limits advance once to 24K tokens and 10
turns. Stage 2 is absorbing: limits never regress.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from enum import Enum

logger = logging.getLogger(__name__)


class Stage(Enum):
    STAGE1 = 1
    STAGE2 = 2


@dataclass(frozen=True)
class CurriculumPolicy:
    window_size: int = 20
    stability_epsilon: float = 0.02
    stage1_max_tokens: int = 16384
    stage1_max_turns: int = 5
    stage2_max_tokens: int = 24576
    stage2_max_turns: int = 10

    def __post_init__(self):
        if self.window_size < 1:
            raise ValueError("window_size must be >= 1")
        if self.stability_epsilon < 0:
            raise ValueError("stability_epsilon must be >= 0")
        if (self.stage2_max_tokens <= self.stage1_max_tokens
                or self.stage2_max_turns <= self.stage1_max_turns):
            raise ValueError("stage-2 limits must strictly dominate stage-1 limits")


@dataclass(frozen=True)
class CurriculumState:
    stage: Stage = Stage.STAGE1
    window: tuple[float, ...] = ()
    batches_seen: int = 0
    transition_batch: int | None = None
    transition_window: tuple[float, ...] = field(default=(), repr=False)


def _is_stable(window: tuple[float, ...], epsilon: float) -> bool:
    mean = sum(window) / len(window)
    spread = max(window) - min(window)
    if mean == 0:
        return spread == 0
    return spread / mean <= epsilon


def observe(
    state: CurriculumState, policy: CurriculumPolicy, batch_mean_length: float
) -> CurriculumState:
    """Fold one batch's mean response length in; maybe advance the stage."""
    if batch_mean_length < 0:
        raise ValueError("batch_mean_length must be >= 0")
    window = (state.window + (batch_mean_length,))[-policy.window_size:]
    batches = state.batches_seen + 1
    if (
        state.stage is Stage.STAGE1
        and len(window) == policy.window_size
        and _is_stable(window, policy.stability_epsilon)
    ):
        logger.info(
            "curriculum advanced to stage 2 at batch %d (window %s)", batches, window
        )
        return CurriculumState(
            stage=Stage.STAGE2,
            window=window,
            batches_seen=batches,
            transition_batch=batches,
            transition_window=window,
        )
    return replace(state, window=window, batches_seen=batches)


def current_limits(state: CurriculumState, policy: CurriculumPolicy) -> tuple[int, int]:
    """(max_response_tokens, max_turns) for the current stage."""
    if state.stage is Stage.STAGE1:
        return policy.stage1_max_tokens, policy.stage1_max_turns
    return policy.stage2_max_tokens, policy.stage2_max_turns
