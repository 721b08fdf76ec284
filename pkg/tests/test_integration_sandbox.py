"""End-to-end checks against the real sandbox worker (sandbox-worker/).

Skipped unless the worker is built (`npm run build` in sandbox-worker/)
and node is available; the primary suite proper never needs it.
"""

from __future__ import annotations

import shutil
import time
from pathlib import Path

import pytest

from tirloop.rollout import Question, RolloutConfig, Termination, run_trajectory
from tirloop.sandbox import SandboxLimits, SandboxSession
from tirloop.scripted import ScriptedFixture
from tirloop.store import load_dataset
from tirloop.toolkit import build_default_registry

from conftest import FIXTURES

WORKER_JS = Path(__file__).parent.parent / "sandbox-worker" / "dist" / "worker.js"

pytestmark = pytest.mark.skipif(
    shutil.which("node") is None or not WORKER_JS.exists(),
    reason="sandbox worker not built (run `npm run build` in sandbox-worker/)",
)


def worker_command() -> list[str]:
    return ["node", str(WORKER_JS)]


@pytest.fixture
def session():
    s = SandboxSession(worker_command(), limits=SandboxLimits(output_cap=4096))
    yield s
    s.close()


class TestSandboxConformance:
    def test_handshake_and_echo(self, session):
        outcome = session.execute("1+1")
        assert outcome.value == "2"
        assert outcome.error is None

    def test_kp_snippet_echo(self, session):
        code = (
            "x = 2.901292604180679\n"
            "P_NOCl_eq = 675 + 2*x\n"
            "P_NO_eq = 43 - 2*x\n"
            "P_Cl2_eq = 23 - x\n"
            "Kp_calculated = (P_NO_eq**2 * P_Cl2_eq) / (P_NOCl_eq**2)\n"
            "Kp_calculated"
        )
        assert session.execute(code).value == "0.059999999999999984"

    def test_persistence_across_requests(self, session):
        session.execute("x = 5694")
        assert session.execute("x").value == "5694"

    def test_syntax_error_class_prefix(self, session):
        outcome = session.execute('print(f\\"N = 5694\\")')
        assert outcome.error.startswith("SyntaxError")
        assert "line continuation" in outcome.error

    def test_timeout_within_twice_limit(self, session):
        started = time.monotonic()
        outcome = session.execute("while True: pass", timeout_ms=500)
        elapsed = time.monotonic() - started
        assert outcome.error == "Timeout"
        assert elapsed < 1.0

    def test_output_cap_sets_truncated(self, session):
        outcome = session.execute("print('y' * 100000)")
        assert outcome.truncated
        assert len(outcome.stdout) <= 4096

    def test_reset_clears_namespace(self, session):
        session.execute("leak = 1")
        session.reset()
        outcome = session.execute("leak")
        assert outcome.error.startswith("NameError")


class TestEndToEnd:
    def test_golden_math_with_real_sandbox(self):
        """The scripted transcript replayed with real code execution: the
        fixed search actually runs, prints N = 5694, and earns +2."""
        fixture = ScriptedFixture.load(FIXTURES / "golden_math.json")
        row = load_dataset(FIXTURES / "golden_math_dataset.jsonl")[0]
        question = Question.from_row(row)
        with SandboxSession(worker_command()) as session:
            trajectory = run_trajectory(
                question,
                fixture.client_factory(question),
                build_default_registry(),
                session,
                RolloutConfig(),
            )
        assert trajectory.termination is Termination.ANSWERED
        assert trajectory.stats.assistant_turns == 3
        assert trajectory.tool_results[0].error.startswith("SyntaxError")
        assert "N = 5694" in trajectory.tool_results[1].content
        assert "Result = 699" in trajectory.tool_results[1].content
        assert trajectory.reward.total == 2

    def test_cli_sandbox_check_passes(self, tmp_path, capsys):
        import json

        from tirloop.cli import EXIT_OK, main

        config = tmp_path / "c.json"
        config.write_text(
            json.dumps({"sandbox": {"command": worker_command()}}), encoding="utf-8"
        )
        code = main(["--config", str(config), "sandbox-check"])
        out = capsys.readouterr().out
        assert code == EXIT_OK, out
        assert "FAIL" not in out

    def test_cli_rollout_live_endpoint_and_live_sandbox(self, tmp_path):
        """Full stack: HTTP completion stub + real worker, no scripted paths."""
        import json
        import threading
        from http.server import BaseHTTPRequestHandler, HTTPServer

        from tirloop.cli import EXIT_OK, main
        from tirloop.store import load_records

        fixture = json.loads((FIXTURES / "golden_math.json").read_text(encoding="utf-8"))
        turns = [c["text"] for c in fixture["scripts"]["math-divisible-7"]["completions"]]
        counter = {"n": 0}

        class Stub(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                self.rfile.read(length)
                text = turns[min(counter["n"], len(turns) - 1)]
                counter["n"] += 1
                body = json.dumps(
                    {"choices": [{"text": text, "finish_reason": "stop"}],
                     "usage": {"completion_tokens": 42}}
                ).encode()
                self.send_response(200)
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def log_message(self, *args):
                pass

        server = HTTPServer(("127.0.0.1", 0), Stub)
        threading.Thread(target=server.serve_forever, daemon=True).start()
        try:
            config = tmp_path / "c.json"
            config.write_text(
                json.dumps(
                    {
                        "endpoint": {"url": f"http://127.0.0.1:{server.server_address[1]}/c"},
                        "sandbox": {"command": worker_command()},
                    }
                ),
                encoding="utf-8",
            )
            out = tmp_path / "t.jsonl"
            code = main(
                ["--config", str(config), "--out", str(out),
                 "rollout", "--dataset", str(FIXTURES / "golden_math_dataset.jsonl")]
            )
            assert code == EXIT_OK
            record = load_records(out)[0]
            assert record["rewards"]["total"] == 2
            assert record["termination"] == "answered"
            assert "N = 5694" in record["tool_results"][1]["content"]
            assert record["stats"]["total_completion_tokens"] == 3 * 42
            assert not record["stats"]["tokens_estimated"]
        finally:
            server.shutdown()
