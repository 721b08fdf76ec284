"""Round-marked prompt rendering and assistant-turn parsing.

The conversation grammar is plain text: each round opens with
``[Round t] USER: ...``, assistant text follows an ``ASSISTANT: `` marker
verbatim, and tool output is injected on ``TOOL: `` lines. Assistant turns
embed reasoning in a ``<think>...</think>`` block and tool invocations in
``<tool_call>...</tool_call>`` blocks whose body is one JSON object.

Everything here is pure: rendering and parsing are deterministic functions
of their inputs, and parsing is total over arbitrary text.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from importlib import resources

from .errors import EmptyConversationError, RoundOrderViolation

TEMPLATE_VERSION = "prompt_v1"

THINK_OPEN = "<think>"
THINK_CLOSE = "</think>"
TOOL_CALL_OPEN = "<tool_call>"
TOOL_CALL_CLOSE = "</tool_call>"

# Tool names every grader knows about when no registry is in scope.
DEFAULT_TOOL_NAMES = ("answer", "code")


class Role(Enum):
    USER = "user"
    ASSISTANT = "assistant"
    TOOL = "tool"


class FormatGrade(Enum):
    VALID = "valid"
    MINOR = "minor"
    INVALID = "invalid"


@dataclass(frozen=True)
class Message:
    """One conversation entry. round_index is non-decreasing across a conversation."""

    role: Role
    round_index: int
    content: str


@dataclass(frozen=True)
class ToolCallRequest:
    """A well-formed tool invocation parsed from a <tool_call> block."""

    name: str
    arguments: dict


@dataclass
class ParsedAssistantTurn:
    """Structured decomposition of one raw assistant completion.

    tool_calls preserves document order; malformed holds the bodies of
    <tool_call> blocks whose JSON did not parse into {name, arguments}.
    trailing_text is everything outside recognized think/tool_call tags.
    """

    raw: str
    think: str | None = None
    tool_calls: list[ToolCallRequest] = field(default_factory=list)
    malformed: list[str] = field(default_factory=list)
    trailing_text: str = ""
    grade: FormatGrade = FormatGrade.INVALID


@lru_cache(maxsize=None)
def _load_template() -> str:
    return (
        resources.files("tirloop.templates")
        .joinpath(f"{TEMPLATE_VERSION}.txt")
        .read_text(encoding="utf-8")
    )


def _normalize_tool_line(content: str) -> str:
    # Re-serialize valid JSON with default separators so the TOOL: line is
    # stable regardless of how the caller spaced the payload.
    try:
        return json.dumps(json.loads(content), ensure_ascii=False)
    except (json.JSONDecodeError, TypeError):
        return content


def render_prompt(conversation: list[Message], tool_specs: list) -> str:
    """Render a conversation into the full prompt text.

    The system preamble embeds the serialized tool specs, each round is
    marked ``[Round t] USER:``, tool results are prefixed ``TOOL: ``, and
    an open ``ASSISTANT: `` cue is appended when the last message is a
    user or tool message. Byte-deterministic.

    Raises EmptyConversationError / RoundOrderViolation on bad input.
    """
    if not conversation:
        raise EmptyConversationError("conversation must contain at least one message")
    first = conversation[0]
    if first.role is not Role.USER or first.round_index != 0:
        raise RoundOrderViolation(
            f"conversation must open with a round-0 user message, got "
            f"{first.role.value} round {first.round_index}"
        )

    lines: list[str] = []
    current_round = -1
    for i, msg in enumerate(conversation):
        if msg.round_index < current_round:
            raise RoundOrderViolation(
                f"message {i}: round {msg.round_index} after round {current_round}"
            )
        if msg.role is Role.USER:
            current_round = msg.round_index
            lines.append(f"[Round {current_round}] USER: {msg.content}")
        else:
            if msg.round_index > current_round:
                raise RoundOrderViolation(
                    f"message {i}: {msg.role.value} message cannot open round "
                    f"{msg.round_index}"
                )
            if msg.role is Role.ASSISTANT:
                lines.append(f"ASSISTANT: {msg.content}")
            else:
                lines.append(f"TOOL: {_normalize_tool_line(msg.content)}")

    if conversation[-1].role in (Role.USER, Role.TOOL):
        lines.append("ASSISTANT: ")

    specs_json = json.dumps(
        [spec.serialize() if hasattr(spec, "serialize") else spec for spec in tool_specs],
        indent=4,
        ensure_ascii=False,
    )
    # Split-and-join: placeholder text occurring inside message content or
    # tool specs must never itself be substituted.
    template = _load_template()
    head, _, rest = template.partition("{{TOOL_SPECS}}")
    middle, _, tail = rest.partition("{{ROUNDS}}")
    return head + specs_json + middle + "\n".join(lines) + tail


def _scan_blocks(raw: str, open_tag: str, close_tag: str) -> list[tuple[int, int, str]]:
    """All complete (start, end, body) blocks, literal and non-nested.

    The first close tag after an opener closes the block; unmatched
    openers are left for the caller's trailing text.
    """
    blocks = []
    pos = 0
    while True:
        start = raw.find(open_tag, pos)
        if start == -1:
            break
        body_start = start + len(open_tag)
        end = raw.find(close_tag, body_start)
        if end == -1:
            break
        blocks.append((start, end + len(close_tag), raw[body_start:end]))
        pos = end + len(close_tag)
    return blocks


def parse_assistant(raw: str, registered_names=DEFAULT_TOOL_NAMES, schemas=None) -> ParsedAssistantTurn:
    """Parse a raw assistant completion. Total: never raises, malformation is data.

    The think block is recognized only when its opener precedes the first
    tool call. Each complete <tool_call> block is parsed as one JSON
    object; parse failures are recorded in .malformed. The returned grade
    follows grade_format with is_final_turn=False.
    """
    turn = ParsedAssistantTurn(raw=raw)
    call_blocks = _scan_blocks(raw, TOOL_CALL_OPEN, TOOL_CALL_CLOSE)
    think_blocks = _scan_blocks(raw, THINK_OPEN, THINK_CLOSE)

    first_call_start = call_blocks[0][0] if call_blocks else len(raw)
    think_span = None
    # The pair must close before the first tool call opens, otherwise the
    # spans would overlap and the think text would swallow the call.
    if think_blocks and think_blocks[0][1] <= first_call_start:
        think_span = think_blocks[0]
        turn.think = think_span[2]

    for _, _, body in call_blocks:
        call = _parse_call_body(body)
        if call is None:
            turn.malformed.append(body)
        else:
            turn.tool_calls.append(call)

    covered = [(s, e) for s, e, _ in call_blocks]
    if think_span is not None:
        covered.append((think_span[0], think_span[1]))
    covered.sort()
    outside = []
    cursor = 0
    for s, e in covered:
        outside.append(raw[cursor:s])
        cursor = e
    outside.append(raw[cursor:])
    turn.trailing_text = "".join(outside).strip()

    turn.grade = grade_format(turn, is_final_turn=False,
                              registered_names=registered_names, schemas=schemas)
    return turn


def _parse_call_body(body: str) -> ToolCallRequest | None:
    try:
        obj = json.loads(body)
    except (json.JSONDecodeError, ValueError):
        return None
    if not isinstance(obj, dict):
        return None
    name = obj.get("name")
    if not isinstance(name, str) or not name:
        return None
    arguments = obj.get("arguments", {})
    if not isinstance(arguments, dict):
        return None
    return ToolCallRequest(name=name, arguments=arguments)


def _arguments_conform(arguments: dict, schema: dict | None) -> bool:
    """Minimal JSON-schema check: required keys present, primitive types match."""
    if schema is None:
        return True
    for key in schema.get("required", []):
        if key not in arguments:
            return False
    type_map = {
        "string": str,
        "integer": int,
        "number": (int, float),
        "boolean": bool,
        "object": dict,
        "array": list,
    }
    for key, prop in schema.get("properties", {}).items():
        if key in arguments and "type" in prop:
            expected = type_map.get(prop["type"])
            if expected is not None and not isinstance(arguments[key], expected):
                return False
            if prop["type"] in ("integer", "number") and isinstance(arguments[key], bool):
                return False
    return True


def grade_format(
    turn: ParsedAssistantTurn,
    is_final_turn: bool = False,
    registered_names=DEFAULT_TOOL_NAMES,
    schemas: dict | None = None,
) -> FormatGrade:
    """Grade a parsed turn's structural compliance.

    Valid: exactly one well-formed tool call with a registered name,
    schema-conformant arguments, boxed content when the call is "answer",
    a think block present, and no text outside the recognized tags.

    Minor (recoverable-by-machine deviations):
      M1 missing <think> block but one otherwise-valid tool call;
      M2 loose text outside the recognized tags;
      M3 more than one well-formed tool call (first executes, rest ignored);
      M4 answer call whose string lacks \\boxed{} but is non-empty.

    Everything else is Invalid. The rule table is position-independent;
    is_final_turn is accepted for callers that grade terminal turns but
    does not change the outcome.
    """
    del is_final_turn
    from .toolkit import default_schemas, extract_boxed  # toolkit depends on protocol types

    if schemas is None:
        schemas = default_schemas()
    if not turn.tool_calls:
        return FormatGrade.INVALID
    if turn.malformed:
        return FormatGrade.INVALID

    first = turn.tool_calls[0]
    if first.name not in registered_names:
        return FormatGrade.INVALID
    schema = (schemas or {}).get(first.name)
    if not _arguments_conform(first.arguments, schema):
        return FormatGrade.INVALID
    if first.name == "answer":
        answer = first.arguments.get("answer")
        if not isinstance(answer, str) or not answer.strip():
            return FormatGrade.INVALID
        if extract_boxed(answer) is None:
            return FormatGrade.MINOR  # M4
    if len(turn.tool_calls) > 1:
        return FormatGrade.MINOR  # M3
    if turn.trailing_text:
        return FormatGrade.MINOR  # M2
    if turn.think is None:
        return FormatGrade.MINOR  # M1
    return FormatGrade.VALID
