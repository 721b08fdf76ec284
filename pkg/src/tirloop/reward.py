"""Outcome/format reward computation and discounted per-turn credits.

The total reward is the sum of an outcome component (+1 correct / -1
otherwise) and a format component (+1 valid / 0 minor / -1 invalid), so it
always lands in {-2, -1, 0, 1, 2}. Credits back-propagate the total over
assistant turns with a discount factor; the terminal turn receives the
total undiscounted.

Answer equivalence is rule-based: normalize both strings (whitespace,
currency markers, unit suffixes, \\frac canonicalization, thousands
separators), then accept on exact match or on numeric closeness within
max(absolute_tolerance, relative_tolerance * |gold|).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction

from .errors import DomainViolation
from .protocol import FormatGrade

_FRAC = re.compile(r"\\[dt]?frac\{([^{}]*)\}\{([^{}]*)\}")
_TEXT_WRAPPER = re.compile(r"\\(?:text|mathrm|operatorname)\{([^{}]*)\}")
_THOUSANDS = re.compile(r"(?<=\d),(?=\d{3}(?:\D|$))")
_UNIT_SUFFIX = re.compile(r"\s+(?:[A-Za-z%°µμ]+\^?\d*\.?\s*)+$")
_NUMERIC_START = re.compile(r"^[+-]?(?:\d|\.\d)")
_NUMBER = re.compile(r"^[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?$")


@dataclass(frozen=True)
class EquivalenceConfig:
    """Knobs for the answer-matching pipeline. Tolerances must be positive."""

    relative_tolerance: float = 1e-3
    absolute_tolerance: float = 1e-6
    strip_units: bool = True
    normalize_fractions: bool = True

    def __post_init__(self):
        if self.relative_tolerance <= 0 or self.absolute_tolerance <= 0:
            raise DomainViolation("tolerances must be strictly positive")


@dataclass(frozen=True)
class RewardBreakdown:
    """outcome + format = total, plus per-assistant-turn discounted credits."""

    outcome: int
    format: int
    total: int
    credits: list[float] = field(default_factory=list)
    gamma: float = 1.0


def normalize_answer(text: str, cfg: EquivalenceConfig = EquivalenceConfig()) -> str:
    """Apply the normalization pipeline and return the canonical string."""
    s = text.strip()
    s = s.replace("\\$", "").replace("$", "")
    s = s.replace("\\left", "").replace("\\right", "")
    s = s.replace("\\,", " ").replace("\\;", " ").replace("\\ ", " ")
    s = _TEXT_WRAPPER.sub(r"\1", s)
    if cfg.normalize_fractions:
        # Innermost-first so nested fractions collapse too; parenthesize
        # only when a part is not a single atom.
        def _flatten(m: re.Match) -> str:
            num, den = m.group(1), m.group(2)
            atom = re.compile(r"^[A-Za-z0-9.\\-]+$")
            num = num if atom.match(num) else f"({num})"
            den = den if atom.match(den) else f"({den})"
            return f"{num}/{den}"

        prev = None
        while prev != s:
            prev = s
            s = _FRAC.sub(_flatten, s)
    s = _THOUSANDS.sub("", s)
    s = re.sub(r"\s+", " ", s).strip()
    if cfg.strip_units and _NUMERIC_START.match(s):
        s = _UNIT_SUFFIX.sub("", s).strip()
    s = s.rstrip(".").strip() if _NUMERIC_START.match(s) else s
    return s


def _parse_number(s: str) -> Fraction | None:
    """Integers, decimals, scientific notation, and simple a/b fractions."""
    s = s.strip()
    if s.startswith("(") and s.endswith(")"):
        inner = s[1:-1]
        if "(" not in inner and ")" not in inner:
            s = inner
    if "/" in s:
        num, _, den = s.partition("/")
        p, q = _parse_number(num), _parse_number(den)
        if p is None or q is None or q == 0:
            return None
        return p / q
    if not _NUMBER.match(s):
        return None
    try:
        return Fraction(s)
    except (ValueError, ZeroDivisionError):
        return None


def answers_equivalent(
    predicted: str, gold: str, cfg: EquivalenceConfig = EquivalenceConfig()
) -> bool:
    """True iff the normalized strings match exactly, or both parse as
    numbers within max(absolute_tolerance, relative_tolerance * |gold|).

    Both inputs are boxed interiors; the tolerance is anchored on gold.
    """
    p_norm = normalize_answer(predicted, cfg)
    g_norm = normalize_answer(gold, cfg)
    if p_norm == g_norm:
        return True
    p_num = _parse_number(p_norm)
    g_num = _parse_number(g_norm)
    if p_num is None or g_num is None:
        return False
    bound = max(
        Fraction(str(cfg.absolute_tolerance)),
        Fraction(str(cfg.relative_tolerance)) * abs(g_num),
    )
    return abs(p_num - g_num) <= bound


def outcome_reward(
    predicted_boxed: str | None,
    gold: str,
    cfg: EquivalenceConfig = EquivalenceConfig(),
) -> int:
    """+1 iff an answer was produced and it is equivalent to gold; -1 otherwise."""
    if predicted_boxed is None:
        return -1
    return 1 if answers_equivalent(predicted_boxed, gold, cfg) else -1


def format_reward(grade: FormatGrade) -> int:
    """Valid -> +1, Minor -> 0, Invalid -> -1."""
    return {FormatGrade.VALID: 1, FormatGrade.MINOR: 0, FormatGrade.INVALID: -1}[grade]


def total_reward(outcome: int, fmt: int) -> int:
    if outcome not in (-1, 1):
        raise DomainViolation(f"outcome reward must be -1 or +1, got {outcome}")
    if fmt not in (-1, 0, 1):
        raise DomainViolation(f"format reward must be in {{-1, 0, 1}}, got {fmt}")
    return outcome + fmt


def assign_credits(total: int, assistant_turn_count: int, gamma: float) -> list[float]:
    """Per-turn credit: total * gamma^(n-1-i). The last turn gets total undiscounted."""
    if not 0 < gamma <= 1:
        raise DomainViolation(f"gamma must be in (0, 1], got {gamma}")
    if assistant_turn_count < 1:
        raise DomainViolation("assistant turn count must be >= 1")
    n = assistant_turn_count
    return [total * gamma ** (n - 1 - i) for i in range(n)]


def breakdown(
    predicted_boxed: str | None,
    gold: str,
    grade: FormatGrade,
    assistant_turn_count: int,
    gamma: float = 0.99,
    cfg: EquivalenceConfig = EquivalenceConfig(),
) -> RewardBreakdown:
    """Full reward computation for one trajectory."""
    out = outcome_reward(predicted_boxed, gold, cfg)
    fmt = format_reward(grade)
    total = total_reward(out, fmt)
    credits = assign_credits(total, assistant_turn_count, gamma) if assistant_turn_count else []
    return RewardBreakdown(outcome=out, format=fmt, total=total, credits=credits, gamma=gamma)
