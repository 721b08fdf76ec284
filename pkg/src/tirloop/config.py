"""Harness configuration: JSON file -> validated dataclasses.

Unknown keys are rejected with their full key path so a typo in a config
file fails loudly instead of silently running with a default. The auth
token itself never appears in a config or a log; only the name of the
environment variable that carries it does.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .client import EndpointConfig
from .curriculum import CurriculumPolicy
from .errors import ConfigError
from .reward import EquivalenceConfig
from .rollout import RolloutConfig
from .sandbox import SandboxLimits


@dataclass(frozen=True)
class SandboxConfig:
    command: tuple[str, ...] = ("node", "sandbox-worker/dist/worker.js")
    memory_mb: int = 512
    cpu_seconds: int = 10
    output_cap: int = 4096
    timeout_ms: int = 10000

    def limits(self) -> SandboxLimits:
        return SandboxLimits(
            memory_mb=self.memory_mb,
            cpu_seconds=self.cpu_seconds,
            output_cap=self.output_cap,
        )


@dataclass(frozen=True)
class RewardConfig:
    gamma: float = 0.99


@dataclass(frozen=True)
class PathsConfig:
    dataset: str | None = None
    output: str | None = None


@dataclass(frozen=True)
class TrainerMetadata:
    """Values exported into run metadata for the external trainer; the
    harness itself never acts on them."""

    rollout_batch_size: int = 512
    minibatch_size: int = 128
    learning_rate: float = 1e-6
    lr_schedule: str = "cosine"


@dataclass(frozen=True)
class HarnessConfig:
    endpoint: EndpointConfig = field(default_factory=EndpointConfig)
    rollout: RolloutConfig = field(default_factory=RolloutConfig)
    curriculum: CurriculumPolicy = field(default_factory=CurriculumPolicy)
    equivalence: EquivalenceConfig = field(default_factory=EquivalenceConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    sandbox: SandboxConfig = field(default_factory=SandboxConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)
    trainer: TrainerMetadata = field(default_factory=TrainerMetadata)

    def to_json(self) -> dict:
        return asdict(self)


_SECTIONS = {
    "endpoint": EndpointConfig,
    "rollout": RolloutConfig,
    "curriculum": CurriculumPolicy,
    "equivalence": EquivalenceConfig,
    "reward": RewardConfig,
    "sandbox": SandboxConfig,
    "paths": PathsConfig,
    "trainer": TrainerMetadata,
}

# JSON arrays arrive as lists; these dataclass fields want tuples.
_TUPLE_FIELDS = {("rollout", "stop_sequences"), ("sandbox", "command")}


def _build_section(name: str, cls, data: dict):
    allowed = {f.name for f in fields(cls)}
    for key in data:
        if key not in allowed:
            raise ConfigError(f"{name}.{key}", "unknown key")
    kwargs = {}
    for key, value in data.items():
        if (name, key) in _TUPLE_FIELDS and isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(name, str(exc)) from exc


def load_config(path: str | Path | None) -> HarnessConfig:
    """Load a config file; a missing path yields all defaults."""
    if path is None:
        return HarnessConfig()
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(str(path), "config file not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(str(path), f"invalid JSON: {exc.msg}") from exc
    return parse_config(data)


def parse_config(data: dict) -> HarnessConfig:
    if not isinstance(data, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    for key in data:
        if key not in _SECTIONS:
            raise ConfigError(key, "unknown key")
    sections = {}
    for name, cls in _SECTIONS.items():
        raw = data.get(name, {})
        if not isinstance(raw, dict):
            raise ConfigError(name, "section must be a JSON object")
        sections[name] = _build_section(name, cls, raw)
    return HarnessConfig(**sections)


def config_field_defaults() -> list[tuple[str, object]]:
    """(key path, default) for every config field, for --help output."""
    out = []
    for name, cls in _SECTIONS.items():
        instance = cls()
        for f in fields(cls):
            out.append((f"{name}.{f.name}", getattr(instance, f.name)))
    return out

