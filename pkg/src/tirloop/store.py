"""Trajectory persistence and dataset loading.

Trajectories serialize to newline-delimited JSON with a stable key order
(schema_version 1) so external RL trainers can consume the stream without
caring which harness run produced it. Loading preserves unknown keys, so
records survive a load/re-export round trip from newer writers.

Datasets are newline-delimited JSON rows {"id", "question", "answer",
"domain"?}; validation errors carry the 1-based line number.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

from .errors import DatasetMalformedError
from .rollout import Trajectory

SCHEMA_VERSION = 1
REWARD_TOTAL_RANGE = (-2, -1, 0, 1, 2)


@dataclass(frozen=True)
class RunMetadata:
    """Run-level context stamped into every exported record."""

    endpoint_id: str = "unknown"
    curriculum_stage: int = 1
    config_digest: str = ""
    extra: dict | None = None

    def to_json(self) -> dict:
        out = {
            "endpoint_id": self.endpoint_id,
            "curriculum_stage": self.curriculum_stage,
            "config_digest": self.config_digest,
        }
        if self.extra:
            out.update(self.extra)
        return out


def config_digest(config_json: dict) -> str:
    """Stable digest of a config mapping: identical configs, identical digest."""
    canonical = json.dumps(config_json, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def to_record(trajectory: Trajectory, run: RunMetadata | None = None) -> dict:
    """Flatten a Trajectory into the schema_version-1 record shape."""
    run = run or RunMetadata()
    return {
        "schema_version": SCHEMA_VERSION,
        "question_id": trajectory.question_id,
        "gold": trajectory.gold,
        "messages": [
            {"role": m.role.value, "round": m.round_index, "content": m.content}
            for m in trajectory.messages
        ],
        "parsed_turns": [
            {
                "grade": t.grade.value,
                "tool_names": [c.name for c in t.tool_calls],
                "malformed_blocks": len(t.malformed),
            }
            for t in trajectory.parsed_turns
        ],
        "tool_results": [
            {
                "name": r.name,
                "content": r.content,
                "is_terminal": r.is_terminal,
                "error": r.error,
            }
            for r in trajectory.tool_results
        ],
        "rewards": {
            "outcome": trajectory.reward.outcome,
            "format": trajectory.reward.format,
            "total": trajectory.reward.total,
            "credits": list(trajectory.reward.credits),
            "gamma": trajectory.reward.gamma,
        },
        "termination": trajectory.termination.value,
        "stats": {
            "assistant_turns": trajectory.stats.assistant_turns,
            "total_completion_tokens": trajectory.stats.total_completion_tokens,
            "wall_ms": trajectory.stats.wall_ms,
            "tokens_estimated": trajectory.stats.tokens_estimated,
        },
        "run": run.to_json(),
    }


def export(
    trajectories: Iterable[Trajectory | dict],
    path: str | Path,
    run: RunMetadata | None = None,
) -> int:
    """Write one JSON object per line, UTF-8, stable key order; return the count.

    Accepts Trajectory objects or already-flattened record dicts (the
    latter keep any unknown keys they carry). Every record's total reward
    is checked against {-2..2} at this boundary.
    """
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for item in trajectories:
            record = item if isinstance(item, dict) else to_record(item, run)
            total = record.get("rewards", {}).get("total")
            if total not in REWARD_TOTAL_RANGE:
                raise ValueError(
                    f"record {record.get('question_id')!r} has total reward {total!r} "
                    f"outside {{-2..2}}"
                )
            fh.write(json.dumps(record, ensure_ascii=False))
            fh.write("\n")
            count += 1
    return count


def iter_records(path: str | Path) -> Iterator[dict]:
    """Stream exported records one line at a time."""
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}: line {line_no}: invalid JSON: {exc}") from exc


def load_records(path: str | Path) -> list[dict]:
    return list(iter_records(path))


def write_run_sidecar(path: str | Path, config_json: dict, run: RunMetadata,
                      events: list[dict] | None = None) -> Path:
    """Run-metadata JSON next to the trajectory file (config, curriculum
    events, timestamps)."""
    sidecar = Path(str(path) + ".run.json")
    payload = {
        "created_unix": int(time.time()),
        "run": run.to_json(),
        "config": config_json,
        "curriculum_events": events or [],
    }
    sidecar.write_text(json.dumps(payload, indent=2, ensure_ascii=False) + "\n",
                       encoding="utf-8")
    return sidecar


def iter_dataset(path: str | Path) -> Iterator[dict]:
    """Stream and validate dataset rows; raises DatasetMalformedError(line)."""
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetMalformedError(line_no, f"invalid JSON: {exc.msg}") from exc
            if not isinstance(row, dict):
                raise DatasetMalformedError(line_no, "row is not a JSON object")
            for key in ("id", "question", "answer"):
                if key not in row:
                    raise DatasetMalformedError(line_no, f"missing required field {key!r}")
            if not str(row["answer"]).strip():
                raise DatasetMalformedError(line_no, "empty gold answer")
            yield row


def load_dataset(path: str | Path) -> list[dict]:
    """All rows of a dataset file: {"id", "question", "answer", "domain"?}."""
    return list(iter_dataset(path))
