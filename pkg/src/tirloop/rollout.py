"""The multi-turn rollout loop.

One trajectory: render the conversation, sample a completion, parse it,
execute the first well-formed tool call, feed the tool output back, and
repeat until the answer tool fires or a limit trips. The loop is total:
whatever the model emits, it halts within max_turns completions and
returns a well-formed, reward-annotated Trajectory.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

from .client import Completion, FinishReason, ModelClient, estimate_tokens
from .errors import ArgumentSchemaViolation
from .protocol import (
    TOOL_CALL_CLOSE,
    TOOL_CALL_OPEN,
    FormatGrade,
    Message,
    ParsedAssistantTurn,
    Role,
    grade_format,
    parse_assistant,
    render_prompt,
)
from .reward import EquivalenceConfig, RewardBreakdown, breakdown, format_reward
from .toolkit import AnswerPayload, ToolRegistry, ToolResult, tool_message_content

logger = logging.getLogger(__name__)

DEFAULT_STOP_SEQUENCES = (TOOL_CALL_CLOSE, "[Round ")


class Termination(Enum):
    ANSWERED = "answered"
    TURN_LIMIT = "turn_limit"
    TOKEN_LIMIT = "token_limit"
    MODEL_ERROR = "model_error"


@dataclass(frozen=True)
class RolloutConfig:
    max_turns: int = 5
    max_response_tokens: int = 16384
    temperature: float = 1.0
    stop_sequences: tuple[str, ...] = DEFAULT_STOP_SEQUENCES
    tool_output_cap: int = 4096

    def __post_init__(self):
        if self.max_turns < 1 or self.max_response_tokens < 1 or self.tool_output_cap < 1:
            raise ValueError("limits must be positive")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if TOOL_CALL_CLOSE not in self.stop_sequences:
            raise ValueError(f"stop_sequences must include {TOOL_CALL_CLOSE!r}")


@dataclass(frozen=True)
class Question:
    id: str
    text: str
    gold: str
    domain: str | None = None

    @classmethod
    def from_row(cls, row: dict) -> "Question":
        return cls(
            id=str(row["id"]),
            text=row["question"],
            gold=row["answer"],
            domain=row.get("domain"),
        )


@dataclass
class TrajectoryStats:
    assistant_turns: int = 0
    total_completion_tokens: int = 0
    wall_ms: int = 0
    tokens_estimated: bool = False


@dataclass
class Trajectory:
    """Full record of one problem attempt."""

    question_id: str
    gold: str
    messages: list[Message] = field(default_factory=list)
    parsed_turns: list[ParsedAssistantTurn] = field(default_factory=list)
    tool_results: list[ToolResult] = field(default_factory=list)
    termination: Termination = Termination.MODEL_ERROR
    reward: RewardBreakdown = field(
        default_factory=lambda: RewardBreakdown(outcome=-1, format=-1, total=-2)
    )
    stats: TrajectoryStats = field(default_factory=TrajectoryStats)

    @property
    def final_grade(self) -> FormatGrade:
        if not self.parsed_turns:
            return FormatGrade.INVALID
        return self.parsed_turns[-1].grade


def _reattach_stop_marker(text: str, finish_reason: FinishReason) -> str:
    """Stop-sequence decoding cuts the closing tag off; put it back when an
    opener is left dangling so parsing sees the block the model intended."""
    if finish_reason is not FinishReason.STOP:
        return text
    last_open = text.rfind(TOOL_CALL_OPEN)
    if last_open == -1:
        return text
    if text.find(TOOL_CALL_CLOSE, last_open) == -1:
        return text + TOOL_CALL_CLOSE
    return text


def _completion_tokens(completion: Completion, stats: TrajectoryStats) -> None:
    if completion.usage and completion.usage.completion_tokens is not None:
        stats.total_completion_tokens += completion.usage.completion_tokens
    else:
        stats.total_completion_tokens += estimate_tokens(completion.text)
        stats.tokens_estimated = True


def run_trajectory(
    question: Question,
    client: ModelClient,
    registry: ToolRegistry,
    session,
    cfg: RolloutConfig,
    *,
    gamma: float = 0.99,
    equivalence: EquivalenceConfig = EquivalenceConfig(),
    timer: Callable[[], float] = time.monotonic,
) -> Trajectory:
    """Drive one question to termination and fill its reward breakdown.

    The registry must contain "answer"; a session is required whenever
    "code" is registered. Client errors terminate the trajectory with
    ModelError (outcome -1) rather than raising.
    """
    started = timer()
    trajectory = Trajectory(question_id=question.id, gold=question.gold)
    trajectory.messages.append(Message(Role.USER, 0, question.text))
    registered = registry.names()
    schemas = registry.schemas()
    specs = registry.specs()
    current_round = 0
    predicted: AnswerPayload | None = None

    for _ in range(cfg.max_turns):
        prompt = render_prompt(trajectory.messages, specs)
        completion = client.complete(
            prompt,
            stop=list(cfg.stop_sequences),
            max_tokens=cfg.max_response_tokens,
            temperature=cfg.temperature,
        )

        if completion.finish_reason is FinishReason.ERROR:
            if completion.text:
                _append_assistant_turn(trajectory, completion, current_round,
                                       registered, schemas)
            trajectory.termination = Termination.MODEL_ERROR
            break

        turn = _append_assistant_turn(trajectory, completion, current_round,
                                      registered, schemas)

        if turn.tool_calls:
            result = _invoke_first_call(trajectory, turn, registry, session, cfg)
            if result.is_terminal:
                predicted = AnswerPayload.from_text(result.content)
                trajectory.termination = Termination.ANSWERED
                break
            trajectory.messages.append(
                Message(Role.TOOL, current_round, tool_message_content(result))
            )
        elif completion.finish_reason is FinishReason.LENGTH:
            trajectory.termination = Termination.TOKEN_LIMIT
            break
    else:
        trajectory.termination = Termination.TURN_LIMIT

    if trajectory.parsed_turns:
        final = trajectory.parsed_turns[-1]
        final.grade = grade_format(final, is_final_turn=True,
                                   registered_names=registered, schemas=schemas)

    boxed = predicted.boxed_content if predicted else None
    turns = len(trajectory.parsed_turns)
    if turns:
        trajectory.reward = breakdown(
            boxed, question.gold, trajectory.final_grade, turns,
            gamma=gamma, cfg=equivalence,
        )
    else:
        # Model never produced a turn: worst case on both components.
        trajectory.reward = RewardBreakdown(
            outcome=-1, format=format_reward(FormatGrade.INVALID), total=-2,
            credits=[], gamma=gamma,
        )

    trajectory.stats.assistant_turns = turns
    trajectory.stats.wall_ms = int((timer() - started) * 1000)
    return trajectory


def _append_assistant_turn(
    trajectory: Trajectory,
    completion: Completion,
    current_round: int,
    registered,
    schemas,
) -> ParsedAssistantTurn:
    text = _reattach_stop_marker(completion.text, completion.finish_reason)
    turn = parse_assistant(text, registered_names=registered, schemas=schemas)
    trajectory.messages.append(Message(Role.ASSISTANT, current_round, text))
    trajectory.parsed_turns.append(turn)
    _completion_tokens(completion, trajectory.stats)
    return turn


def _invoke_first_call(
    trajectory: Trajectory,
    turn: ParsedAssistantTurn,
    registry: ToolRegistry,
    session,
    cfg: RolloutConfig,
) -> ToolResult:
    call = turn.tool_calls[0]
    try:
        result = registry.invoke(call, session=session, output_cap=cfg.tool_output_cap)
    except ArgumentSchemaViolation as exc:
        result = ToolResult(name=call.name, content="", is_terminal=False,
                            error=f"invalid arguments: {exc}")
    trajectory.tool_results.append(result)
    return result


def _error_trajectory(question: Question, gamma: float, reason: str) -> Trajectory:
    logger.error("trajectory for %s failed: %s", question.id, reason)
    t = Trajectory(question_id=question.id, gold=question.gold)
    t.messages.append(Message(Role.USER, 0, question.text))
    t.termination = Termination.MODEL_ERROR
    t.reward = RewardBreakdown(outcome=-1, format=-1, total=-2, credits=[], gamma=gamma)
    return t


def run_batch(
    questions: list[Question],
    client_factory: Callable[[Question], ModelClient],
    registry: ToolRegistry,
    cfg: RolloutConfig,
    *,
    parallelism: int = 1,
    session_factory: Callable[[Question], object] | None = None,
    gamma: float = 0.99,
    equivalence: EquivalenceConfig = EquivalenceConfig(),
    timer: Callable[[], float] = time.monotonic,
) -> list[Trajectory]:
    """Run every question to completion, up to `parallelism` at a time.

    Output order matches input order regardless of completion order. Each
    trajectory gets its own client and its own sandbox session, so state
    can never leak between problems. Per-item failures surface as
    ModelError trajectories; nothing is fatal to the batch.
    """
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")

    def _one(question: Question) -> Trajectory:
        session = session_factory(question) if session_factory else None
        try:
            client = client_factory(question)
            return run_trajectory(
                question, client, registry, session, cfg,
                gamma=gamma, equivalence=equivalence, timer=timer,
            )
        except Exception as exc:  # isolation: one bad item never kills the batch
            return _error_trajectory(question, gamma, repr(exc))
        finally:
            if session is not None and hasattr(session, "close"):
                session.close()

    if parallelism == 1:
        return [_one(q) for q in questions]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(_one, questions))
