"""Exception types shared across the harness."""

from __future__ import annotations


class HarnessError(Exception):
    """Base class for all harness-specific failures."""


class EmptyConversationError(HarnessError):
    """Prompt rendering was asked to render zero messages."""


class RoundOrderViolation(HarnessError):
    """Message round indices are non-monotone or a tool/assistant message opened a round."""


class DuplicateToolNameError(HarnessError):
    """A tool name was registered twice."""


class ToolNotRegisteredError(HarnessError):
    """Registry lookup for a name with no handler."""


class SandboxUnavailableError(HarnessError):
    """The code tool was invoked without a live sandbox session."""


class ArgumentSchemaViolation(HarnessError):
    """Tool call arguments do not conform to the tool's parameter schema."""


class SpawnFailureError(HarnessError):
    """The sandbox worker process could not be started."""


class DomainViolation(HarnessError):
    """A reward component was outside its documented range."""


class RaggedResultsError(HarnessError):
    """avg@k received problems with differing sample counts."""


class EmptyInputError(HarnessError):
    """An aggregate metric was asked to summarize zero records."""


class DatasetMalformedError(HarnessError):
    """A dataset row failed validation; carries the 1-based line number."""

    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class ConfigError(HarnessError):
    """Invalid harness config; carries the offending key path."""

    def __init__(self, key_path: str, reason: str):
        super().__init__(f"{key_path}: {reason}")
        self.key_path = key_path
        self.reason = reason
