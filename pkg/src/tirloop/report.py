"""Report rendering: JSON document, plain-text table, per-record NDJSON log,
and matplotlib figures saved alongside the delimited output."""

from __future__ import annotations

import json
import logging
from collections import Counter
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

logging.getLogger("matplotlib").setLevel(logging.WARNING)

from .evalbench import EvalReport
from .rollout import Trajectory

logger = logging.getLogger(__name__)

_FIG_SIZE = (6.4, 4.0)
_BAR_COLOR = "#4878a8"


def write_json_report(report: EvalReport, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(
        json.dumps(report.to_json(), indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
    return path


def write_records_log(report: EvalReport, path: str | Path) -> Path:
    """Per-record grading log, one JSON object per line."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for record in report.records:
            fh.write(json.dumps(record.to_json(), ensure_ascii=False))
            fh.write("\n")
    return path


def text_table(report: EvalReport) -> str:
    """Plain-text summary table with one row per domain."""
    lines = [
        f"benchmark: {report.benchmark}   problems: {report.problems}   k: {report.k}",
        f"avg@{report.k} accuracy: {report.accuracy_avg_at_k:.4f}",
        f"format accuracy:  {report.format_accuracy:.4f}",
        f"mean turns:       {report.mean_turns:.2f}",
        f"mean tokens:      {report.mean_tokens:.1f}",
        "",
        f"{'domain':<16}{'records':>8}{'accuracy':>10}",
        "-" * 34,
    ]
    counts = Counter(r.domain for r in report.records)
    for domain, accuracy in report.per_domain.items():
        lines.append(f"{domain:<16}{counts[domain]:>8}{accuracy:>10.4f}")
    return "\n".join(lines) + "\n"


def _new_axes(title: str, xlabel: str, ylabel: str):
    fig, ax = plt.subplots(figsize=_FIG_SIZE)
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    return fig, ax


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_eval_figures(report: EvalReport, outdir: str | Path) -> list[Path]:
    """Domain accuracy bars plus turn/token histograms, as PNG files."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []

    fig, ax = _new_axes(f"{report.benchmark}: accuracy by domain", "domain", "accuracy")
    domains = list(report.per_domain)
    ax.bar(domains, [report.per_domain[d] for d in domains], color=_BAR_COLOR)
    ax.set_ylim(0, 1.05)
    ax.tick_params(axis="x", rotation=30)
    written.append(_save(fig, outdir / "domain_accuracy.png"))

    fig, ax = _new_axes(f"{report.benchmark}: interaction turns", "assistant turns", "records")
    ax.hist([r.assistant_turns for r in report.records],
            bins=range(0, max((r.assistant_turns for r in report.records), default=1) + 2),
            color=_BAR_COLOR, rwidth=0.9)
    written.append(_save(fig, outdir / "turns_hist.png"))

    fig, ax = _new_axes(f"{report.benchmark}: completion tokens", "tokens", "records")
    ax.hist([r.completion_tokens for r in report.records], bins=20, color=_BAR_COLOR)
    written.append(_save(fig, outdir / "tokens_hist.png"))

    logger.info("wrote %d figures to %s", len(written), outdir)
    return written


def reward_histogram(trajectories: list[Trajectory]) -> dict[int, int]:
    """Count of trajectories at each total reward value."""
    counts = Counter(t.reward.total for t in trajectories)
    return {total: counts.get(total, 0) for total in (-2, -1, 0, 1, 2)}


def rollout_summary(trajectories: list[Trajectory]) -> str:
    """Plain-text summary printed after a rollout run."""
    n = len(trajectories)
    if n == 0:
        return "no trajectories\n"
    mean_turns = sum(t.stats.assistant_turns for t in trajectories) / n
    mean_tokens = sum(t.stats.total_completion_tokens for t in trajectories) / n
    hist = reward_histogram(trajectories)
    lines = [
        f"trajectories: {n}",
        f"mean turns:   {mean_turns:.2f}",
        f"mean tokens:  {mean_tokens:.1f}",
        "reward histogram:",
    ]
    for total in (-2, -1, 0, 1, 2):
        lines.append(f"  {total:+d}: {hist[total]}")
    return "\n".join(lines) + "\n"


def render_rollout_figures(trajectories: list[Trajectory], outdir: str | Path) -> list[Path]:
    """Reward histogram figure for a rollout batch."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    hist = reward_histogram(trajectories)
    fig, ax = _new_axes("total reward distribution", "total reward", "trajectories")
    ax.bar([str(k) for k in hist], list(hist.values()), color=_BAR_COLOR)
    return [_save(fig, outdir / "reward_hist.png")]
