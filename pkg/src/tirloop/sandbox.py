"""Client adapter for the code-interpreter worker.

The worker is a separate process speaking newline-delimited JSON over
stdio: a `{"ready": true, "protocol": 1}` handshake line, then one
response object per request object. This module only spawns and talks to
it; the worker itself ships separately (see the sandbox-worker package).

MockSession is the in-process stand-in used by tests and --scripted runs:
it replays canned outcomes and records the code it was asked to run.
"""

from __future__ import annotations

import json
import logging
import subprocess
import threading
import time
import uuid
from dataclasses import dataclass, field

from .errors import SpawnFailureError

logger = logging.getLogger(__name__)

PROTOCOL_VERSION = 1
DEFAULT_TIMEOUT_MS = 10_000
HANDSHAKE_DEADLINE_S = 15.0


@dataclass(frozen=True)
class SandboxLimits:
    memory_mb: int = 512
    cpu_seconds: int = 10
    output_cap: int = 4096


@dataclass(frozen=True)
class ExecOutcome:
    """One execution's result as seen by the harness."""

    stdout: str = ""
    value: str | None = None
    error: str | None = None
    duration_ms: int = 0
    truncated: bool = False
    worker_restarted: bool = False


class SandboxSession:
    """One live worker process; one in-flight request at a time.

    A worker that misses its deadline or dies is killed and respawned;
    the caller sees an error-carrying ExecOutcome, never an exception,
    so a runaway snippet cannot take down the harness.
    """

    def __init__(
        self,
        command: list[str],
        limits: SandboxLimits = SandboxLimits(),
        default_timeout_ms: int = DEFAULT_TIMEOUT_MS,
        response_grace_s: float = HANDSHAKE_DEADLINE_S,
    ):
        self.command = list(command)
        self.limits = limits
        self.default_timeout_ms = default_timeout_ms
        self.response_grace_s = response_grace_s
        self._proc: subprocess.Popen | None = None
        self._spawn()

    # -- lifecycle -----------------------------------------------------

    def _worker_argv(self) -> list[str]:
        return self.command + [
            "--memory-mb", str(self.limits.memory_mb),
            "--cpu-seconds", str(self.limits.cpu_seconds),
            "--output-cap", str(self.limits.output_cap),
        ]

    def _spawn(self) -> None:
        argv = self._worker_argv()
        try:
            self._proc = subprocess.Popen(
                argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
                text=True,
                encoding="utf-8",
            )
        except OSError as exc:
            raise SpawnFailureError(f"cannot spawn worker {argv[0]!r}: {exc}") from exc
        line = self._read_line(deadline_s=HANDSHAKE_DEADLINE_S)
        if line is None:
            self._kill()
            raise SpawnFailureError("worker produced no handshake line")
        try:
            handshake = json.loads(line)
        except json.JSONDecodeError as exc:
            self._kill()
            raise SpawnFailureError(f"bad handshake line: {line!r}") from exc
        if handshake.get("ready") is not True or handshake.get("protocol") != PROTOCOL_VERSION:
            self._kill()
            raise SpawnFailureError(f"unexpected handshake: {handshake!r}")

    def _kill(self) -> None:
        if self._proc is None:
            return
        try:
            self._proc.kill()
            self._proc.wait(timeout=5)
        except OSError:
            pass
        self._proc = None

    def close(self) -> None:
        self._kill()

    def reset(self) -> None:
        """Clear the namespace by restarting the worker (fresh handshake)."""
        self._kill()
        self._spawn()

    def __enter__(self) -> "SandboxSession":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    # -- I/O -----------------------------------------------------------

    def _read_line(self, deadline_s: float) -> str | None:
        # Blocking readline bounded by a watchdog: the worker enforces its
        # own timeout, so a missing response means the worker is gone.
        assert self._proc is not None and self._proc.stdout is not None
        box: list[str | None] = [None]

        def _read():
            box[0] = self._proc.stdout.readline()

        t = threading.Thread(target=_read, daemon=True)
        t.start()
        t.join(deadline_s)
        if t.is_alive() or not box[0]:
            return None
        return box[0]

    def execute(self, code: str, timeout_ms: int | None = None) -> ExecOutcome:
        """Run code in the worker's persistent namespace.

        The worker owns timeout semantics (kills and restarts its
        interpreter, answering with error "Timeout"); this client only
        guards against the worker process itself dying.
        """
        timeout = timeout_ms if timeout_ms is not None else self.default_timeout_ms
        restarted = False
        if self._proc is None or self._proc.poll() is not None:
            self._spawn()
            restarted = True
        request = {"id": uuid.uuid4().hex, "code": code, "timeout_ms": timeout}
        started = time.monotonic()
        try:
            assert self._proc is not None and self._proc.stdin is not None
            self._proc.stdin.write(json.dumps(request, ensure_ascii=False) + "\n")
            self._proc.stdin.flush()
        except (OSError, ValueError):
            self._kill()
            return ExecOutcome(
                error="WorkerCrashed: worker pipe closed",
                duration_ms=int((time.monotonic() - started) * 1000),
                worker_restarted=True,
            )
        # Grace beyond the worker's own timeout budget for interpreter restart.
        line = self._read_line(deadline_s=timeout / 1000 + self.response_grace_s)
        if line is None:
            self._kill()
            return ExecOutcome(
                error="WorkerCrashed: no response from worker",
                duration_ms=int((time.monotonic() - started) * 1000),
                worker_restarted=True,
            )
        try:
            data = json.loads(line)
        except json.JSONDecodeError:
            self._kill()
            return ExecOutcome(
                error=f"WorkerCrashed: unparseable response {line!r}",
                duration_ms=int((time.monotonic() - started) * 1000),
                worker_restarted=True,
            )
        if data.get("id") != request["id"]:
            logger.warning("response id mismatch: sent %s got %s", request["id"], data.get("id"))
        return ExecOutcome(
            stdout=data.get("stdout") or "",
            value=data.get("value"),
            error=data.get("error"),
            duration_ms=int(data.get("duration_ms") or 0),
            truncated=bool(data.get("truncated")),
            worker_restarted=restarted,
        )


@dataclass
class MockSession:
    """Scripted executor: returns canned outcomes in order and records code.

    When the script runs out, further calls return an empty success; this
    keeps adversarial rollout tests total.
    """

    outcomes: list[ExecOutcome] = field(default_factory=list)
    executed: list[str] = field(default_factory=list)

    def execute(self, code: str, timeout_ms: int | None = None) -> ExecOutcome:
        del timeout_ms
        self.executed.append(code)
        index = len(self.executed) - 1
        if index < len(self.outcomes):
            return self.outcomes[index]
        return ExecOutcome()

    def reset(self) -> None:
        self.executed.clear()

    def close(self) -> None:
        pass
