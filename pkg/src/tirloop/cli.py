"""Command-line entry point.

Commands:
    rollout        run a dataset through the tool loop, export trajectories
    eval           run a benchmark at k samples per problem, write reports
    grade          compare one predicted answer against gold
    sandbox-check  conformance-check the code-interpreter worker
    export         re-export (merge) trajectory record files

Exit codes: 0 success, 1 command failure, 2 config error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import store
from .client import EndpointConfig, HTTPCompletionClient
from .config import HarnessConfig, config_field_defaults, load_config
from .errors import ConfigError, DatasetMalformedError, HarnessError, SpawnFailureError
from .evalbench import BenchmarkSpec, evaluate
from .report import (
    render_eval_figures,
    render_rollout_figures,
    rollout_summary,
    text_table,
    write_json_report,
    write_records_log,
)
from .reward import answers_equivalent, normalize_answer, outcome_reward
from .rollout import Question, run_batch
from .sandbox import SandboxSession
from .scripted import ScriptedFixture
from .toolkit import build_default_registry, extract_boxed

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2


def _config_epilog() -> str:
    lines = ["config file keys and defaults:"]
    for key, default in config_field_defaults():
        lines.append(f"  {key} = {default!r}")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tirloop",
        description="Tool-integrated reasoning rollout harness",
        epilog=_config_epilog(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--config", help="harness config JSON file")
    parser.add_argument("--out", help="output path (file or directory, per command)")
    parser.add_argument("--parallelism", type=int, default=1,
                        help="concurrent trajectories (default 1)")
    parser.add_argument("--scripted",
                        help="scripted fixture JSON; run with no network or sandbox")
    parser.add_argument("--seed", type=int, default=None,
                        help="server-side sampling seed, recorded in run metadata")
    parser.add_argument("-v", "--verbose", action="store_true")

    sub = parser.add_subparsers(dest="command", required=True)

    p_rollout = sub.add_parser("rollout", help="run a dataset through the tool loop")
    p_rollout.add_argument("--dataset", help="NDJSON dataset path (overrides config)")
    p_rollout.add_argument("--figures", action="store_true",
                           help="also render figures next to the export")

    p_eval = sub.add_parser("eval", help="evaluate a benchmark at k samples/problem")
    p_eval.add_argument("--dataset", help="NDJSON dataset path (overrides config)")
    p_eval.add_argument("--name", default="benchmark", help="benchmark name for reports")
    p_eval.add_argument("--k", type=int, default=1, help="samples per problem")
    p_eval.add_argument("--temperature", type=float, default=1.0,
                        help="sampling temperature (default 1.0)")
    p_eval.add_argument("--no-figures", action="store_true")

    p_grade = sub.add_parser("grade", help="grade one predicted answer against gold")
    p_grade.add_argument("predicted")
    p_grade.add_argument("gold")

    sub.add_parser("sandbox-check", help="run the sandbox conformance checks")

    p_export = sub.add_parser("export", help="merge/re-export trajectory record files")
    p_export.add_argument("inputs", nargs="+", help="trajectory NDJSON files")

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "rollout":
            return cmd_rollout(args, config)
        if args.command == "eval":
            return cmd_eval(args, config)
        if args.command == "grade":
            return cmd_grade(args, config)
        if args.command == "sandbox-check":
            return cmd_sandbox_check(args, config)
        if args.command == "export":
            return cmd_export(args, config)
        raise AssertionError(f"unhandled command {args.command}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DatasetMalformedError as exc:
        print(f"dataset malformed: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except (HarnessError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


def _factories(args, config: HarnessConfig):
    """(client_factory, session_factory, endpoint_id) per run mode."""
    if args.scripted:
        fixture = ScriptedFixture.load(args.scripted)
        return fixture.client_factory, fixture.session_factory, "scripted"
    if not config.endpoint.url:
        raise ConfigError("endpoint.url", "no endpoint configured and --scripted not given")
    endpoint = config.endpoint
    if args.seed is not None:
        endpoint = replace(endpoint, seed=args.seed)

    def client_factory(question, sample_index: int = 0):
        del question, sample_index
        return HTTPCompletionClient(endpoint)

    def session_factory(question):
        del question
        return SandboxSession(
            list(config.sandbox.command),
            limits=config.sandbox.limits(),
            default_timeout_ms=config.sandbox.timeout_ms,
        )

    return client_factory, session_factory, endpoint.url


def _run_metadata(config: HarnessConfig, endpoint_id: str, seed) -> store.RunMetadata:
    extra = {"trainer": config.to_json()["trainer"]}
    if seed is not None:
        extra["seed"] = seed
    # scripted runs replay exactly; live sampling without a server seed is not
    elif endpoint_id != "scripted":
        extra["sampling_deterministic"] = False
    return store.RunMetadata(
        endpoint_id=endpoint_id,
        curriculum_stage=1,
        config_digest=store.config_digest(config.to_json()),
        extra=extra,
    )


def _dataset_path(args, config: HarnessConfig) -> str:
    dataset = getattr(args, "dataset", None) or config.paths.dataset
    if not dataset:
        raise ConfigError("paths.dataset", "no dataset given (flag or config)")
    return dataset


def cmd_rollout(args, config: HarnessConfig) -> int:
    dataset = _dataset_path(args, config)
    out_path = Path(args.out or config.paths.output or "trajectories.jsonl")
    client_factory, session_factory, endpoint_id = _factories(args, config)
    questions = [Question.from_row(r) for r in store.iter_dataset(dataset)]
    registry = build_default_registry()

    # Chunked so an interrupt drains finished work instead of losing the run.
    chunk_size = max(args.parallelism * 4, 8)
    trajectories = []
    interrupted = False
    try:
        for start in range(0, len(questions), chunk_size):
            trajectories.extend(
                run_batch(
                    questions[start:start + chunk_size],
                    lambda q: client_factory(q, 0),
                    registry,
                    config.rollout,
                    parallelism=args.parallelism,
                    session_factory=session_factory,
                    gamma=config.reward.gamma,
                    equivalence=config.equivalence,
                )
            )
    except KeyboardInterrupt:
        interrupted = True
        logger.warning("interrupted; flushing %d completed trajectories", len(trajectories))

    run_meta = _run_metadata(config, endpoint_id, args.seed)
    if interrupted:
        run_meta = replace(
            run_meta, extra={**(run_meta.extra or {}), "truncated_by_signal": True}
        )
    count = store.export(trajectories, out_path, run_meta)
    store.write_run_sidecar(out_path, config.to_json(), run_meta)
    print(f"wrote {count} records to {out_path}")
    print(rollout_summary(trajectories), end="")
    if getattr(args, "figures", False):
        for fig in render_rollout_figures(trajectories, out_path.parent / "figures"):
            print(f"wrote {fig}")
    return EXIT_FAILURE if interrupted else EXIT_OK


def cmd_eval(args, config: HarnessConfig) -> int:
    dataset = _dataset_path(args, config)
    outdir = Path(args.out or config.paths.output or "eval_out")
    outdir.mkdir(parents=True, exist_ok=True)
    client_factory, session_factory, endpoint_id = _factories(args, config)
    registry = build_default_registry()

    spec = BenchmarkSpec(
        name=args.name, dataset_path=dataset, k=args.k, equivalence=config.equivalence
    )
    report = evaluate(
        spec,
        client_factory,
        registry,
        config.rollout,
        parallelism=args.parallelism,
        session_factory=session_factory,
        gamma=config.reward.gamma,
        force_temperature=args.temperature,
    )

    json_path = write_json_report(report, outdir / "report.json")
    (outdir / "report.txt").write_text(text_table(report), encoding="utf-8")
    records_path = write_records_log(report, outdir / "records.jsonl")
    print(text_table(report), end="")
    print(f"wrote {json_path}")
    print(f"wrote {records_path}")
    if not args.no_figures:
        for fig in render_eval_figures(report, outdir / "figures"):
            print(f"wrote {fig}")
    logger.info("eval complete: endpoint=%s", endpoint_id)
    return EXIT_OK


def cmd_grade(args, config: HarnessConfig) -> int:
    predicted_raw = args.predicted
    boxed = extract_boxed(predicted_raw)
    if boxed is not None:
        interior = boxed
    else:
        interior = predicted_raw if predicted_raw.strip() else None
    cfg = config.equivalence
    equivalent = interior is not None and answers_equivalent(interior, args.gold, cfg)
    reward = outcome_reward(interior, args.gold, cfg)
    print(f"predicted:  {predicted_raw!r}")
    print(f"extracted:  {interior!r}")
    print(f"normalized: {normalize_answer(interior, cfg)!r}"
          if interior is not None else "normalized: None")
    print(f"gold:       {args.gold!r} -> normalized {normalize_answer(args.gold, cfg)!r}")
    print(f"equivalent: {equivalent}")
    print(f"outcome reward: {reward:+d}")
    return EXIT_OK if equivalent else EXIT_FAILURE


def cmd_sandbox_check(args, config: HarnessConfig) -> int:
    del args
    checks: list[tuple[str, bool, str]] = []
    session = None
    try:
        session = SandboxSession(
            list(config.sandbox.command),
            limits=config.sandbox.limits(),
            default_timeout_ms=config.sandbox.timeout_ms,
        )
        checks.append(("spawn+handshake", True, "protocol 1"))
    except SpawnFailureError as exc:
        checks.append(("spawn+handshake", False, str(exc)))

    if session is not None:
        r = session.execute("1+1")
        checks.append(("echo", r.value == "2", f"value={r.value!r} error={r.error!r}"))
        session.execute("x = 5694")
        r = session.execute("x")
        checks.append(("persistence", r.value == "5694", f"value={r.value!r}"))
        # a stray backslash-quote is the classic line-continuation artifact
        r = session.execute('print(f\\"bad\\")')
        checks.append(("syntax-error", (r.error or "").startswith("SyntaxError"),
                       f"error={r.error!r}"))
        t0 = time.monotonic()
        r = session.execute("while True: pass", timeout_ms=500)
        elapsed = time.monotonic() - t0
        checks.append(("timeout", r.error == "Timeout" and elapsed < 2 * 0.5 + 1.0,
                       f"error={r.error!r} elapsed={elapsed:.2f}s"))
        r = session.execute(f"print('y' * {config.sandbox.output_cap * 2})")
        checks.append(("output-cap", r.truncated, f"truncated={r.truncated}"))
        session.close()

    failed = [name for name, ok, _ in checks if not ok]
    for name, ok, detail in checks:
        print(f"{'PASS' if ok else 'FAIL'}  {name:<16} {detail}")
    if session is None:
        print("SKIP  remaining checks (no session)")
    return EXIT_OK if not failed and session is not None else EXIT_FAILURE


def cmd_export(args, config: HarnessConfig) -> int:
    del config
    out_path = Path(args.out or "merged.jsonl")
    records = []
    for input_path in args.inputs:
        records.extend(store.iter_records(input_path))
    count = store.export(records, out_path)
    print(f"wrote {count} records to {out_path}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
