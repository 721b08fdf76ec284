"""Completion-endpoint clients.

The rollout loop only needs one call: complete(prompt, stop, max_tokens,
temperature) -> Completion. HTTPCompletionClient speaks the de-facto open
completion schema (prompt/max_tokens/temperature/stop in, choices+usage
out). ScriptedClient replays a fixed turn sequence so the whole harness
runs deterministically with no network.
"""

from __future__ import annotations

import logging
import math
import os
import time
from dataclasses import dataclass
from enum import Enum
from typing import Protocol

import requests

logger = logging.getLogger(__name__)


class FinishReason(Enum):
    STOP = "stop"
    LENGTH = "length"
    ERROR = "error"


@dataclass(frozen=True)
class TokenUsage:
    prompt_tokens: int | None = None
    completion_tokens: int | None = None


@dataclass(frozen=True)
class Completion:
    text: str
    finish_reason: FinishReason
    usage: TokenUsage | None = None


class ModelClient(Protocol):
    def complete(
        self, prompt: str, *, stop: list[str], max_tokens: int, temperature: float
    ) -> Completion: ...


def estimate_tokens(text: str) -> int:
    """Fallback token count when the endpoint reports no usage: ceil(bytes/4)."""
    return math.ceil(len(text.encode("utf-8")) / 4)


@dataclass(frozen=True)
class EndpointConfig:
    url: str = ""
    auth_env: str | None = None
    deadline_s: float = 120.0
    model: str | None = None
    seed: int | None = None


class HTTPCompletionClient:
    """Text-completion endpoint client with one retry and exponential backoff.

    Transport failures and 5xx responses are retried once; a second
    failure comes back as a Completion with finish_reason ERROR so the
    rollout loop can record a ModelError termination instead of raising.
    """

    def __init__(self, endpoint: EndpointConfig, retries: int = 1, backoff_s: float = 1.0):
        self.endpoint = endpoint
        self.retries = retries
        self.backoff_s = backoff_s
        self._session = requests.Session()

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.endpoint.auth_env:
            token = os.environ.get(self.endpoint.auth_env)
            if token:
                headers["Authorization"] = f"Bearer {token}"
        return headers

    def complete(self, prompt, *, stop, max_tokens, temperature) -> Completion:
        body = {
            "prompt": prompt,
            "max_tokens": max_tokens,
            "temperature": temperature,
            "stop": list(stop),
        }
        if self.endpoint.model:
            body["model"] = self.endpoint.model
        if self.endpoint.seed is not None:
            body["seed"] = self.endpoint.seed

        last_error = None
        for attempt in range(self.retries + 1):
            if attempt:
                time.sleep(self.backoff_s * 2 ** (attempt - 1))
            try:
                resp = self._session.post(
                    self.endpoint.url,
                    json=body,
                    headers=self._headers(),
                    timeout=self.endpoint.deadline_s,
                )
            except requests.RequestException as exc:
                last_error = str(exc)
                logger.warning("completion request failed (attempt %d): %s", attempt + 1, exc)
                continue
            if resp.status_code >= 500:
                last_error = f"HTTP {resp.status_code}"
                logger.warning("completion endpoint 5xx (attempt %d): %s", attempt + 1, last_error)
                continue
            if resp.status_code >= 400:
                return Completion("", FinishReason.ERROR, None)
            return self._parse(resp.json())
        logger.error("completion endpoint unreachable: %s", last_error)
        return Completion("", FinishReason.ERROR, None)

    @staticmethod
    def _parse(data: dict) -> Completion:
        choices = data.get("choices") or []
        if not choices:
            return Completion("", FinishReason.ERROR, None)
        choice = choices[0]
        text = choice.get("text", "")
        reason_raw = choice.get("finish_reason", "stop")
        reason = {
            "stop": FinishReason.STOP,
            "length": FinishReason.LENGTH,
        }.get(reason_raw, FinishReason.ERROR)
        usage = data.get("usage") or {}
        token_usage = None
        if "completion_tokens" in usage or "prompt_tokens" in usage:
            token_usage = TokenUsage(
                prompt_tokens=usage.get("prompt_tokens"),
                completion_tokens=usage.get("completion_tokens"),
            )
        return Completion(text, reason, token_usage)


class ScriptedClient:
    """Deterministic stand-in for the endpoint: replays a turn sequence.

    Once the script is exhausted it keeps returning the final turn, so
    adversarial scripts cannot stall the loop.
    """

    def __init__(self, turns: list[Completion]):
        if not turns:
            turns = [Completion("", FinishReason.STOP, None)]
        self.turns = list(turns)
        self.calls = 0
        self.prompts: list[str] = []

    @classmethod
    def from_texts(cls, texts: list[str]) -> "ScriptedClient":
        return cls([Completion(t, FinishReason.STOP, None) for t in texts])

    def complete(self, prompt, *, stop, max_tokens, temperature) -> Completion:
        del stop, max_tokens, temperature
        self.prompts.append(prompt)
        turn = self.turns[min(self.calls, len(self.turns) - 1)]
        self.calls += 1
        return turn
