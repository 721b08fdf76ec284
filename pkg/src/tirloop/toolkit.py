"""Tool specifications, the registry, and the answer tool's termination semantics.

The answer tool is the single standardized exit: invoking it delivers the
final response (expected to carry a \\boxed{} payload) and terminates the
trajectory. The code tool forwards source to a sandbox session. The
registry is built once at startup and shared read-only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable

from .errors import (
    ArgumentSchemaViolation,
    DuplicateToolNameError,
    SandboxUnavailableError,
    ToolNotRegisteredError,
)
from .protocol import ToolCallRequest

TRUNCATION_SUFFIX = "…[truncated]"
DEFAULT_TOOL_OUTPUT_CAP = 4096


@dataclass(frozen=True)
class ToolSpec:
    """A tool's name, description, and JSON parameter schema."""

    name: str
    description: str
    parameters_schema: dict

    def serialize(self) -> dict:
        """Wire shape: {"type": "function", "function": {name, description, parameters}}."""
        return {
            "type": "function",
            "function": {
                "name": self.name,
                "description": self.description,
                "parameters": self.parameters_schema,
            },
        }

    @classmethod
    def deserialize(cls, obj: dict) -> "ToolSpec":
        fn = obj["function"]
        return cls(
            name=fn["name"],
            description=fn["description"],
            parameters_schema=fn["parameters"],
        )


@dataclass(frozen=True)
class ToolResult:
    """Outcome of one tool invocation. is_terminal only for a successful answer call."""

    name: str
    content: str
    is_terminal: bool
    error: str | None = None


@dataclass(frozen=True)
class AnswerPayload:
    """The answer tool's string payload and the interior of its first \\boxed{}."""

    answer_text: str
    boxed_content: str | None

    @classmethod
    def from_text(cls, answer_text: str) -> "AnswerPayload":
        return cls(answer_text=answer_text, boxed_content=extract_boxed(answer_text))


def answer_tool_spec() -> ToolSpec:
    """The standardized answer tool: one required string property "answer"."""
    return ToolSpec(
        name="answer",
        description="Respond to the user",
        parameters_schema={
            "type": "object",
            "properties": {
                "answer": {
                    "type": "string",
                    "description": "Response content, place your final answer "
                    "within \\boxed{} notation.",
                }
            },
            "required": ["answer"],
        },
    )


def code_tool_spec() -> ToolSpec:
    """The code interpreter tool: one required string property "code"."""
    return ToolSpec(
        name="code",
        description="Execute Python code in a sandboxed interpreter and return "
        "its printed output and the value of the last expression.",
        parameters_schema={
            "type": "object",
            "properties": {
                "code": {
                    "type": "string",
                    "description": "Python source code to execute.",
                }
            },
            "required": ["code"],
        },
    )


def default_schemas() -> dict[str, dict]:
    """Parameter schemas for the built-in tools, keyed by name."""
    return {
        spec.name: spec.parameters_schema
        for spec in (answer_tool_spec(), code_tool_spec())
    }


def extract_boxed(text: str) -> str | None:
    """Interior of the first \\boxed{...}, with brace-depth matching.

    Nested braces are allowed; an absent marker or unbalanced braces
    yield None. An empty interior yields "" (present but empty).
    """
    marker = "\\boxed{"
    start = text.find(marker)
    if start == -1:
        return None
    depth = 1
    i = start + len(marker)
    begin = i
    while i < len(text):
        ch = text[i]
        if ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return text[begin:i]
        i += 1
    return None


def _validate_arguments(arguments: dict, schema: dict) -> None:
    type_map = {
        "string": str,
        "integer": int,
        "number": (int, float),
        "boolean": bool,
        "object": dict,
        "array": list,
    }
    for key in schema.get("required", []):
        if key not in arguments:
            raise ArgumentSchemaViolation(f"missing required argument {key!r}")
    for key, prop in schema.get("properties", {}).items():
        if key not in arguments or "type" not in prop:
            continue
        expected = type_map.get(prop["type"])
        value = arguments[key]
        if expected is not None and not isinstance(value, expected):
            raise ArgumentSchemaViolation(
                f"argument {key!r} must be {prop['type']}, got {type(value).__name__}"
            )
        if prop["type"] in ("integer", "number") and isinstance(value, bool):
            raise ArgumentSchemaViolation(f"argument {key!r} must be {prop['type']}")


def truncate_output(content: str, cap: int) -> str:
    if len(content) <= cap:
        return content
    return content[:cap] + TRUNCATION_SUFFIX


Handler = Callable[[dict, object], ToolResult]


class ToolRegistry:
    """Name -> (spec, handler) mapping, immutable once the harness starts.

    invoke() is total over unknown names: they come back as error-carrying
    results rather than exceptions, so a model can never crash the loop by
    inventing a tool.
    """

    def __init__(self):
        self._entries: dict[str, tuple[ToolSpec, Handler]] = {}

    def register(self, spec: ToolSpec, handler: Handler) -> None:
        if spec.name in self._entries:
            raise DuplicateToolNameError(f"tool {spec.name!r} already registered")
        self._entries[spec.name] = (spec, handler)

    def lookup(self, name: str) -> tuple[ToolSpec, Handler]:
        try:
            return self._entries[name]
        except KeyError:
            raise ToolNotRegisteredError(f"no tool named {name!r}") from None

    def names(self) -> tuple[str, ...]:
        return tuple(self._entries)

    def specs(self) -> list[ToolSpec]:
        return [spec for spec, _ in self._entries.values()]

    def schemas(self) -> dict[str, dict]:
        return {name: spec.parameters_schema for name, (spec, _) in self._entries.items()}

    def invoke(
        self,
        call: ToolCallRequest,
        session=None,
        output_cap: int = DEFAULT_TOOL_OUTPUT_CAP,
    ) -> ToolResult:
        """Execute one parsed tool call.

        Unknown names return an error result (non-terminal). Schema
        violations raise ArgumentSchemaViolation; a missing sandbox
        session for the code tool raises SandboxUnavailableError. Content
        longer than output_cap is truncated with a literal suffix.
        """
        if call.name not in self._entries:
            return ToolResult(
                name=call.name,
                content="",
                is_terminal=False,
                error=f"unknown tool {call.name!r}",
            )
        spec, handler = self._entries[call.name]
        _validate_arguments(call.arguments, spec.parameters_schema)
        result = handler(call.arguments, session)
        return ToolResult(
            name=result.name,
            content=truncate_output(result.content, output_cap),
            is_terminal=result.is_terminal,
            error=result.error,
        )


def answer_handler(arguments: dict, session) -> ToolResult:
    """Terminal handler: echoes the answer string back as content."""
    del session
    return ToolResult(name="answer", content=arguments["answer"], is_terminal=True)


def code_handler(arguments: dict, session) -> ToolResult:
    """Forward source to the sandbox session; stdout plus the echoed value,
    or the error text, become the content shown back to the model."""
    if session is None:
        raise SandboxUnavailableError("code tool invoked with no sandbox session")
    outcome = session.execute(arguments["code"])
    if outcome.error is not None:
        return ToolResult(name="code", content=outcome.error, is_terminal=False,
                          error=outcome.error)
    parts = [outcome.stdout] if outcome.stdout else []
    if outcome.value is not None:
        parts.append(outcome.value)
    return ToolResult(name="code", content="\n".join(p.rstrip("\n") for p in parts),
                      is_terminal=False)


def build_default_registry(include_code: bool = True) -> ToolRegistry:
    """Registry with the answer tool and, optionally, the code tool."""
    registry = ToolRegistry()
    registry.register(answer_tool_spec(), answer_handler)
    if include_code:
        registry.register(code_tool_spec(), code_handler)
    return registry


def tool_message_content(result: ToolResult) -> str:
    """JSON payload for the TOOL: line the model sees on the next turn."""
    shown = result.error if result.error is not None else result.content
    return json.dumps({"name": result.name, "content": shown}, ensure_ascii=False)
