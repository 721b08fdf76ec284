"""tirloop: a tool-integrated reasoning rollout harness.

Drives a text-completion endpoint through a multi-turn tool loop (code
interpreter + terminating answer tool), grades boxed answers with a
dual-component reward, tracks curriculum limits, evaluates benchmarks at
avg@k, and exports reward-annotated trajectories for external RL trainers.
"""

from .client import Completion, FinishReason, HTTPCompletionClient, ModelClient, ScriptedClient
from .curriculum import CurriculumPolicy, CurriculumState, Stage, current_limits, observe
from .evalbench import BenchmarkSpec, EvalReport, avg_at_k, domain_breakdown, evaluate, format_accuracy
from .protocol import (
    FormatGrade,
    Message,
    ParsedAssistantTurn,
    Role,
    ToolCallRequest,
    grade_format,
    parse_assistant,
    render_prompt,
)
from .reward import (
    EquivalenceConfig,
    RewardBreakdown,
    answers_equivalent,
    assign_credits,
    format_reward,
    outcome_reward,
    total_reward,
)
from .rollout import Question, RolloutConfig, Termination, Trajectory, run_batch, run_trajectory
from .sandbox import ExecOutcome, MockSession, SandboxLimits, SandboxSession
from .toolkit import (
    AnswerPayload,
    ToolRegistry,
    ToolResult,
    ToolSpec,
    answer_tool_spec,
    build_default_registry,
    code_tool_spec,
    extract_boxed,
)

__version__ = "0.1.0"
