"""Scripted fixtures: deterministic clients and mock executors from JSON.

A fixture file maps question ids (or "*" for a default) to a list of
completions to replay and, optionally, a list of canned code-execution
outcomes. With one of these, every command runs end to end with no
network and no sandbox worker.

Fixture shape:
    {
      "scripts": {
        "q1": {
          "completions": [{"text": "...", "finish_reason": "stop"}, ...],
          "exec_results": [{"stdout": "...", "value": null, "error": null}, ...]
        },
        "*": { ... fallback ... }
      }
    }
"""

from __future__ import annotations

import json
from pathlib import Path

from .client import Completion, FinishReason, ScriptedClient, TokenUsage
from .errors import ConfigError
from .rollout import Question
from .sandbox import ExecOutcome, MockSession

_FINISH = {reason.value: reason for reason in FinishReason}


def _parse_completion(obj: dict, where: str) -> Completion:
    if not isinstance(obj, dict) or "text" not in obj:
        raise ConfigError(where, "completion must be an object with a 'text' field")
    reason_raw = obj.get("finish_reason", "stop")
    if reason_raw not in _FINISH:
        raise ConfigError(where, f"unknown finish_reason {reason_raw!r}")
    usage = None
    if "completion_tokens" in obj:
        usage = TokenUsage(completion_tokens=obj["completion_tokens"])
    return Completion(text=obj["text"], finish_reason=_FINISH[reason_raw], usage=usage)


def _parse_exec(obj: dict) -> ExecOutcome:
    return ExecOutcome(
        stdout=obj.get("stdout", ""),
        value=obj.get("value"),
        error=obj.get("error"),
        duration_ms=int(obj.get("duration_ms", 0)),
        truncated=bool(obj.get("truncated", False)),
    )


class ScriptedFixture:
    """Client and session factories backed by a fixture mapping."""

    def __init__(self, scripts: dict):
        if not isinstance(scripts, dict) or not scripts:
            raise ConfigError("scripts", "fixture must define a non-empty scripts object")
        self.scripts = scripts

    @classmethod
    def load(cls, path: str | Path) -> "ScriptedFixture":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(str(path), "fixture file not found") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(str(path), f"invalid JSON: {exc.msg}") from exc
        if not isinstance(data, dict) or "scripts" not in data:
            raise ConfigError(str(path), "fixture must contain a 'scripts' object")
        return cls(data["scripts"])

    def _script_for(self, question_id: str) -> dict:
        script = self.scripts.get(question_id, self.scripts.get("*"))
        if script is None:
            raise ConfigError(
                f"scripts.{question_id}", "no script for this question and no '*' fallback"
            )
        return script

    def client_factory(self, question: Question, sample_index: int = 0) -> ScriptedClient:
        del sample_index  # scripted replay is identical across samples
        script = self._script_for(question.id)
        turns = [
            _parse_completion(obj, f"scripts.{question.id}.completions[{i}]")
            for i, obj in enumerate(script.get("completions", []))
        ]
        return ScriptedClient(turns)

    def session_factory(self, question: Question) -> MockSession:
        script = self._script_for(question.id)
        outcomes = [_parse_exec(obj) for obj in script.get("exec_results", [])]
        return MockSession(outcomes=outcomes)
