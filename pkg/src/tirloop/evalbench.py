"""Benchmark evaluation: k samples per problem, avg@k, per-domain accuracy,
format accuracy, and turn/token statistics.

avg@k is the mean over problems of the mean correctness over k independent
samples, which equals the overall fraction of correct records when every
problem has exactly k samples.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

from .client import ModelClient
from .errors import EmptyInputError, RaggedResultsError
from .protocol import FormatGrade
from .reward import EquivalenceConfig
from .rollout import Question, RolloutConfig, Termination, Trajectory, run_batch
from .store import iter_dataset
from .toolkit import ToolRegistry

logger = logging.getLogger(__name__)

UNLABELED_DOMAIN = "unlabeled"


@dataclass(frozen=True)
class BenchmarkSpec:
    name: str
    dataset_path: str
    k: int = 1
    equivalence: EquivalenceConfig = EquivalenceConfig()
    domain_field: str | None = "domain"

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")


@dataclass
class EvalRecord:
    """One (problem, sample) grading log entry."""

    question_id: str
    sample_index: int
    domain: str
    correct: bool
    outcome: int
    format_grade: str
    total_reward: int
    termination: str
    predicted_boxed: str | None
    gold: str
    assistant_turns: int
    completion_tokens: int

    def to_json(self) -> dict:
        return dict(self.__dict__)


@dataclass
class EvalReport:
    benchmark: str
    k: int
    problems: int
    accuracy_avg_at_k: float
    per_domain: dict[str, float]
    mean_turns: float
    mean_tokens: float
    format_accuracy: float
    records: list[EvalRecord] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "benchmark": self.benchmark,
            "k": self.k,
            "problems": self.problems,
            "accuracy_avg_at_k": self.accuracy_avg_at_k,
            "per_domain": self.per_domain,
            "mean_turns": self.mean_turns,
            "mean_tokens": self.mean_tokens,
            "format_accuracy": self.format_accuracy,
            "records": [r.to_json() for r in self.records],
        }


def avg_at_k(correct_flags: list[list[bool]]) -> float:
    """Mean over problems of per-problem mean correctness.

    Every problem must carry the same number of flags; with equal k this
    equals the overall fraction of correct samples.
    """
    if not correct_flags:
        raise EmptyInputError("no problems to aggregate")
    k = len(correct_flags[0])
    if k == 0 or any(len(flags) != k for flags in correct_flags):
        raise RaggedResultsError("every problem must have exactly k correctness flags")
    return sum(sum(map(bool, flags)) / k for flags in correct_flags) / len(correct_flags)


def format_accuracy(trajectories: list[Trajectory]) -> float:
    """Fraction of trajectories whose final assistant turn graded Valid."""
    if not trajectories:
        raise EmptyInputError("no trajectories")
    valid = sum(1 for t in trajectories if t.final_grade is FormatGrade.VALID)
    return valid / len(trajectories)


def domain_breakdown(records: list[EvalRecord]) -> dict[str, float]:
    """Per-domain mean correctness; unlabeled rows group under "unlabeled"."""
    buckets: dict[str, list[bool]] = {}
    for rec in records:
        domain = rec.domain or UNLABELED_DOMAIN
        buckets.setdefault(domain, []).append(rec.correct)
    return {d: sum(flags) / len(flags) for d, flags in sorted(buckets.items())}


def general_average(benchmark_scores: dict[str, float]) -> float:
    """Unweighted mean across benchmarks. Derived aggregate, not a measured
    quantity: each benchmark contributes equally regardless of size."""
    if not benchmark_scores:
        raise EmptyInputError("no benchmark scores")
    return sum(benchmark_scores.values()) / len(benchmark_scores)


def evaluate(
    spec: BenchmarkSpec,
    client_factory: Callable[[Question, int], ModelClient],
    registry: ToolRegistry,
    cfg: RolloutConfig,
    *,
    parallelism: int = 1,
    session_factory=None,
    gamma: float = 0.99,
    force_temperature: float | None = 1.0,
    timer=None,
) -> EvalReport:
    """Run k independent trajectories per problem and aggregate.

    Sampling temperature is forced to 1.0 unless force_temperature is
    None (keep cfg) or another value. client_factory receives (question,
    sample_index) so every sample can get an independent client; each
    sample also gets an independent session via session_factory.
    """
    rows = [Question.from_row(r) for r in iter_dataset(Path(spec.dataset_path))]
    if force_temperature is not None:
        cfg = replace(cfg, temperature=force_temperature)

    # One job per (problem, sample); distinct Question copies so the
    # factories can key per-job state on object identity.
    job_questions: list[Question] = []
    job_samples: list[int] = []
    for question in rows:
        for sample in range(spec.k):
            job_questions.append(replace(question))
            job_samples.append(sample)
    sample_by_question = {id(q): s for q, s in zip(job_questions, job_samples)}

    def _client(question: Question) -> ModelClient:
        return client_factory(question, sample_by_question[id(question)])

    kwargs = dict(
        parallelism=parallelism,
        session_factory=session_factory,
        gamma=gamma,
        equivalence=spec.equivalence,
    )
    if timer is not None:
        kwargs["timer"] = timer
    trajectories = run_batch(job_questions, _client, registry, cfg, **kwargs)

    records: list[EvalRecord] = []
    for i, (trajectory, question) in enumerate(zip(trajectories, job_questions)):
        predicted = _predicted_boxed(trajectory)
        records.append(
            EvalRecord(
                question_id=question.id,
                sample_index=job_samples[i],
                domain=question.domain or UNLABELED_DOMAIN,
                correct=trajectory.reward.outcome == 1,
                outcome=trajectory.reward.outcome,
                format_grade=trajectory.final_grade.value,
                total_reward=trajectory.reward.total,
                termination=trajectory.termination.value,
                predicted_boxed=predicted,
                gold=question.gold,
                assistant_turns=trajectory.stats.assistant_turns,
                completion_tokens=trajectory.stats.total_completion_tokens,
            )
        )

    by_problem: dict[str, list[bool]] = {}
    for rec in records:
        by_problem.setdefault(rec.question_id, []).append(rec.correct)
    accuracy = avg_at_k(list(by_problem.values()))

    return EvalReport(
        benchmark=spec.name,
        k=spec.k,
        problems=len(rows),
        accuracy_avg_at_k=accuracy,
        per_domain=domain_breakdown(records),
        mean_turns=sum(r.assistant_turns for r in records) / len(records),
        mean_tokens=sum(r.completion_tokens for r in records) / len(records),
        format_accuracy=format_accuracy(trajectories),
        records=records,
    )


def _predicted_boxed(trajectory: Trajectory) -> str | None:
    if trajectory.termination is not Termination.ANSWERED or not trajectory.tool_results:
        return None
    from .toolkit import extract_boxed

    return extract_boxed(trajectory.tool_results[-1].content)
