"""The multi-turn loop: termination, rewards, batching, isolation."""

from __future__ import annotations

import json
import random

import pytest

from tirloop.client import Completion, FinishReason, ScriptedClient, TokenUsage
from tirloop.protocol import FormatGrade, Role
from tirloop.rollout import (
    Question,
    RolloutConfig,
    Termination,
    run_batch,
    run_trajectory,
)
from tirloop.sandbox import ExecOutcome, MockSession
from tirloop.scripted import ScriptedFixture
from tirloop.store import load_dataset
from tirloop.toolkit import build_default_registry

from conftest import FIXTURES

CFG = RolloutConfig()
FROZEN_TIMER = lambda: 0.0  # noqa: E731 - deterministic wall clock for tests


def answer_turn(ans: str) -> str:
    body = json.dumps({"name": "answer", "arguments": {"answer": ans}})
    return f"<think>t</think>\n<tool_call>{body}</tool_call>"


def code_turn(code: str) -> str:
    body = json.dumps({"name": "code", "arguments": {"code": code}})
    return f"<think>t</think>\n<tool_call>{body}</tool_call>"


def simple_question(qid="q1", gold="699"):
    return Question(id=qid, text="what is the answer?", gold=gold)


class TestRunTrajectory:
    def test_immediate_correct_answer(self):
        client = ScriptedClient.from_texts([answer_turn("\\boxed{699}")])
        t = run_trajectory(simple_question(), client, build_default_registry(),
                           MockSession(), CFG)
        assert t.termination is Termination.ANSWERED
        assert t.stats.assistant_turns == 1
        assert t.reward.total == 2
        assert t.reward.credits == [2.0]

    def test_golden_math_fixture(self):
        fixture = ScriptedFixture.load(FIXTURES / "golden_math.json")
        row = load_dataset(FIXTURES / "golden_math_dataset.jsonl")[0]
        q = Question.from_row(row)
        t = run_trajectory(q, fixture.client_factory(q), build_default_registry(),
                           fixture.session_factory(q), CFG)
        assert t.termination is Termination.ANSWERED
        assert t.stats.assistant_turns == 3
        assert "SyntaxError" in t.tool_results[0].error
        assert t.reward.total == 2
        expected = [2 * 0.99**2, 2 * 0.99, 2.0]
        assert t.reward.credits == pytest.approx(expected, abs=1e-12)

    def test_turn_limit_when_never_calling_tools(self):
        client = ScriptedClient.from_texts(["just rambling, no tools"] * 10)
        t = run_trajectory(simple_question(), client, build_default_registry(),
                           MockSession(), CFG)
        assert t.termination is Termination.TURN_LIMIT
        assert t.stats.assistant_turns == CFG.max_turns == 5
        assert t.reward.outcome == -1

    def test_token_limit_on_length_finish_without_call(self):
        client = ScriptedClient([Completion("half a thou", FinishReason.LENGTH)])
        t = run_trajectory(simple_question(), client, build_default_registry(),
                           MockSession(), CFG)
        assert t.termination is Termination.TOKEN_LIMIT
        assert t.stats.assistant_turns == 1

    def test_length_finish_with_tool_call_continues(self):
        client = ScriptedClient(
            [
                Completion(code_turn("print(1)"), FinishReason.LENGTH),
                Completion(answer_turn("\\boxed{699}"), FinishReason.STOP),
            ]
        )
        t = run_trajectory(simple_question(), client, build_default_registry(),
                           MockSession(), CFG)
        assert t.termination is Termination.ANSWERED
        assert t.stats.assistant_turns == 2

    def test_model_error_terminates_with_outcome_minus_one(self):
        client = ScriptedClient([Completion("", FinishReason.ERROR)])
        t = run_trajectory(simple_question(), client, build_default_registry(),
                           MockSession(), CFG)
        assert t.termination is Termination.MODEL_ERROR
        assert t.reward.outcome == -1
        assert t.reward.total == -2
        assert t.reward.credits == []

    def test_stop_marker_reattached(self):
        # stop-sequence decoding eats the closing tag
        cut = code_turn("print(2)")[: -len("</tool_call>")]
        client = ScriptedClient(
            [
                Completion(cut, FinishReason.STOP),
                Completion(answer_turn("\\boxed{699}"), FinishReason.STOP),
            ]
        )
        session = MockSession(outcomes=[ExecOutcome(stdout="2\n")])
        t = run_trajectory(simple_question(), client, build_default_registry(),
                           session, CFG)
        assert session.executed == ["print(2)"]
        assert t.termination is Termination.ANSWERED

    def test_error_turn_then_fix_then_answer(self):
        client = ScriptedClient.from_texts(
            [code_turn("bad \\"), code_turn("good = 1"), answer_turn("\\boxed{699}")]
        )
        session = MockSession(
            outcomes=[
                ExecOutcome(error="SyntaxError: unexpected character after line continuation character"),
                ExecOutcome(stdout=""),
            ]
        )
        t = run_trajectory(simple_question(), client, build_default_registry(),
                           session, CFG)
        assert t.termination is Termination.ANSWERED
        assert t.stats.assistant_turns == 3
        assert t.tool_results[0].error
        # the error text is what the model saw on the TOOL line
        tool_msgs = [m for m in t.messages if m.role is Role.TOOL]
        assert "SyntaxError" in tool_msgs[0].content

    def test_unknown_tool_feeds_error_back(self):
        client = ScriptedClient.from_texts(
            [
                "<think>t</think><tool_call>"
                + json.dumps({"name": "websearch", "arguments": {}})
                + "</tool_call>",
                answer_turn("\\boxed{699}"),
            ]
        )
        t = run_trajectory(simple_question(), client, build_default_registry(),
                           MockSession(), CFG)
        assert t.termination is Termination.ANSWERED
        assert "unknown tool" in t.tool_results[0].error

    def test_bad_arguments_feed_error_back(self):
        client = ScriptedClient.from_texts(
            [
                "<think>t</think><tool_call>"
                + json.dumps({"name": "code", "arguments": {"source": "1"}})
                + "</tool_call>",
                answer_turn("\\boxed{699}"),
            ]
        )
        t = run_trajectory(simple_question(), client, build_default_registry(),
                           MockSession(), CFG)
        assert t.termination is Termination.ANSWERED
        assert "invalid arguments" in t.tool_results[0].error

    def test_no_messages_after_terminal_result(self):
        fixture = ScriptedFixture.load(FIXTURES / "golden_math.json")
        row = load_dataset(FIXTURES / "golden_math_dataset.jsonl")[0]
        q = Question.from_row(row)
        t = run_trajectory(q, fixture.client_factory(q), build_default_registry(),
                           fixture.session_factory(q), CFG)
        assert t.tool_results[-1].is_terminal
        assert t.messages[-1].role is Role.ASSISTANT

    def test_token_accounting_prefers_usage(self):
        client = ScriptedClient(
            [
                Completion(code_turn("1"), FinishReason.STOP, TokenUsage(completion_tokens=17)),
                Completion(answer_turn("\\boxed{699}"), FinishReason.STOP,
                           TokenUsage(completion_tokens=5)),
            ]
        )
        t = run_trajectory(simple_question(), client, build_default_registry(),
                           MockSession(), CFG)
        assert t.stats.total_completion_tokens == 22
        assert not t.stats.tokens_estimated

    def test_token_accounting_estimates_without_usage(self):
        client = ScriptedClient.from_texts([answer_turn("\\boxed{699}")])
        t = run_trajectory(simple_question(), client, build_default_registry(),
                           MockSession(), CFG)
        assert t.stats.total_completion_tokens > 0
        assert t.stats.tokens_estimated

    def test_minor_format_answer_without_box(self):
        client = ScriptedClient.from_texts([answer_turn("699, plain")])
        t = run_trajectory(simple_question(), client, build_default_registry(),
                           MockSession(), CFG)
        # answered but unboxed: outcome -1 (no boxed content), format 0
        assert t.termination is Termination.ANSWERED
        assert t.reward.outcome == -1
        assert t.reward.format == 0
        assert t.reward.total == -1


def random_behavior_client(rng: random.Random) -> ScriptedClient:
    """A randomly misbehaving model: tool calls, junk, truncation, errors."""
    turns = []
    for _ in range(rng.randint(1, 8)):
        roll = rng.random()
        if roll < 0.2:
            turns.append(Completion(answer_turn(f"\\boxed{{{rng.randint(0, 999)}}}"),
                                    FinishReason.STOP))
        elif roll < 0.4:
            turns.append(Completion(code_turn(f"x={rng.randint(0, 9)}"), FinishReason.STOP))
        elif roll < 0.55:
            turns.append(Completion('<tool_call>{"name": "code", "arg', FinishReason.STOP))
        elif roll < 0.7:
            turns.append(Completion("no tools " * rng.randint(1, 30), FinishReason.STOP))
        elif roll < 0.8:
            turns.append(Completion("truncated mid-thought", FinishReason.LENGTH))
        elif roll < 0.9:
            turns.append(Completion("", FinishReason.ERROR))
        else:
            turns.append(Completion(
                '<tool_call>{"name": "mystery", "arguments": {}}</tool_call>',
                FinishReason.STOP))
    return ScriptedClient(turns)


class TestTerminationGuarantee:
    def test_500_random_behaviors_halt_within_max_turns(self):
        rng = random.Random(99)
        registry = build_default_registry()
        for i in range(500):
            client = random_behavior_client(rng)
            t = run_trajectory(simple_question(qid=f"q{i}"), client, registry,
                               MockSession(), CFG, timer=FROZEN_TIMER)
            assert client.calls <= CFG.max_turns
            assert t.termination in Termination
            assert t.stats.assistant_turns <= CFG.max_turns
            assert len(t.parsed_turns) == t.stats.assistant_turns
            assert len(t.reward.credits) == t.stats.assistant_turns
            assert t.reward.total in (-2, -1, 0, 1, 2)
            if t.termination is Termination.ANSWERED:
                assert t.tool_results[-1].is_terminal
            else:
                assert not t.tool_results or not t.tool_results[-1].is_terminal


class TestRunBatch:
    def scripted_factory(self, mapping):
        def factory(question):
            return ScriptedClient.from_texts(mapping[question.id])

        return factory

    def test_order_matches_input(self):
        questions = [simple_question(qid=f"q{i}") for i in range(8)]
        mapping = {q.id: [answer_turn(f"\\boxed{{{i}}}")] for i, q in enumerate(questions)}
        results = run_batch(questions, self.scripted_factory(mapping),
                            build_default_registry(), CFG, parallelism=4,
                            session_factory=lambda q: MockSession())
        assert [t.question_id for t in results] == [q.id for q in questions]

    def test_parallelism_oblivious_determinism(self):
        questions = [simple_question(qid=f"q{i}") for i in range(8)]
        mapping = {
            q.id: [code_turn(f"v={i}"), answer_turn(f"\\boxed{{{i}}}")]
            for i, q in enumerate(questions)
        }

        def run(par):
            return run_batch(questions, self.scripted_factory(mapping),
                             build_default_registry(), CFG, parallelism=par,
                             session_factory=lambda q: MockSession(),
                             timer=FROZEN_TIMER)

        serial, parallel = run(1), run(8)
        from tirloop.store import to_record

        assert [to_record(t) for t in serial] == [to_record(t) for t in parallel]

    def test_one_erroring_client_does_not_poison_batch(self):
        questions = [simple_question(qid=f"q{i}") for i in range(3)]

        def factory(question):
            if question.id == "q1":
                return ScriptedClient([Completion("", FinishReason.ERROR)])
            return ScriptedClient.from_texts([answer_turn("\\boxed{699}")])

        results = run_batch(questions, factory, build_default_registry(), CFG,
                            parallelism=3, session_factory=lambda q: MockSession())
        assert results[1].termination is Termination.MODEL_ERROR
        assert results[0].termination is Termination.ANSWERED
        assert results[2].termination is Termination.ANSWERED

    def test_crashing_factory_becomes_model_error(self):
        questions = [simple_question(qid="q0"), simple_question(qid="q1")]

        def factory(question):
            if question.id == "q0":
                raise RuntimeError("factory exploded")
            return ScriptedClient.from_texts([answer_turn("\\boxed{699}")])

        results = run_batch(questions, factory, build_default_registry(), CFG,
                            session_factory=lambda q: MockSession())
        assert results[0].termination is Termination.MODEL_ERROR
        assert results[1].termination is Termination.ANSWERED

    def test_session_isolation(self):
        questions = [simple_question(qid=f"q{i}") for i in range(4)]
        sessions: dict[str, MockSession] = {}

        def session_factory(question):
            sessions[question.id] = MockSession()
            return sessions[question.id]

        mapping = {q.id: [code_turn(f"only_{q.id}"), answer_turn("\\boxed{1}")]
                   for q in questions}
        run_batch(questions, self.scripted_factory(mapping), build_default_registry(),
                  CFG, parallelism=4, session_factory=session_factory)
        assert len(sessions) == 4
        for qid, session in sessions.items():
            assert session.executed == [f"only_{qid}"], "cross-trajectory leakage"
