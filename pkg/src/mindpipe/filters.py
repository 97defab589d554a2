"""Heuristic filtering, dialogue turn parsing, and judge-based scoring.

Turn markers come in three shapes commonly produced by chat models: a plain
``Speaker:`` at the start of a line, a bold ``**Speaker:**`` (colon inside or
just outside the bold), and ``**Turn N**`` section headers with plain speaker
lines underneath. Text before the first marker is preamble and is dropped.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import ScoreParseError, ValidationError
from .genclient import (
    CompletionReply,
    Conversation,
    GenerationConfig,
    build_request,
    complete_with_retries,
    max_output_budget,
)
from .prompts import judge_rubric_template
from .tokenizers import TokenizerSpec, count_tokens

DEFAULT_MIN_TOKENS = 50
DEFAULT_QUALITY_THRESHOLD = 3.0

DECISION_FIELDS = ("doc_id", "chunk_index", "style", "decision", "reason", "token_count")


@dataclass
class DialogueTurn:
    speaker: str
    text: str
    ordinal: int

    def __post_init__(self):
        if not self.speaker:
            raise ValidationError("turn speaker must be nonempty")
        if self.ordinal < 0:
            raise ValidationError("turn ordinal must be >= 0")


_TURN_HEADER = re.compile(r"^\s*\*\*\s*turn\s+\d+\s*\*\*\s*:?\s*$", re.IGNORECASE)
_BOLD_SPEAKER = re.compile(r"^\s*\*\*([^*\n]{1,64}?)(:?)\*\*(:?)\s*(.*)$")
_PLAIN_SPEAKER = re.compile(r"^([^\s:][^:\n]{0,63}):\s?(.*)$")


def _plain_speaker_ok(speaker: str, rest: str) -> bool:
    if not any(ch.isalpha() for ch in speaker):
        return False
    if len(speaker.split()) > 4:
        return False
    if speaker.rstrip()[-1:] in ".?!":
        return False
    if rest.startswith("//"):
        return False
    return True


def _match_marker(line: str) -> tuple[str, str] | None:
    """(speaker, same-line text) if the line opens a new turn, else None."""
    m = _BOLD_SPEAKER.match(line)
    if m:
        speaker = m.group(1).strip()
        has_colon = bool(m.group(2) or m.group(3))
        if speaker and has_colon:
            return speaker, m.group(4).strip()
        return None
    m = _PLAIN_SPEAKER.match(line)
    if m:
        speaker = m.group(1).strip()
        rest = m.group(2)
        if _plain_speaker_ok(speaker, rest):
            return speaker, rest.strip()
    return None


def parse_turns(text: str) -> list[DialogueTurn]:
    """Extract (speaker, text) turns; zero turns is a valid outcome."""
    turns: list[DialogueTurn] = []
    current_speaker: str | None = None
    current_lines: list[str] = []

    def flush() -> None:
        nonlocal current_speaker, current_lines
        if current_speaker is not None:
            body = "\n".join(current_lines).strip()
            turns.append(DialogueTurn(current_speaker, body, len(turns)))
        current_speaker = None
        current_lines = []

    for line in text.splitlines():
        if _TURN_HEADER.match(line):
            flush()
            continue
        marker = _match_marker(line)
        if marker is not None:
            flush()
            current_speaker, first = marker
            current_lines = [first] if first else []
        elif current_speaker is not None:
            current_lines.append(line)
    flush()
    return turns


def serialize_turns(turns: list[DialogueTurn]) -> str:
    """One bold-marked line per turn; whitespace inside a turn collapses."""
    return "\n".join(f"**{t.speaker}:** {' '.join(t.text.split())}" for t in turns)


@dataclass
class FilterDecision:
    keep: bool
    reason: str
    token_count: int


def heuristic_filter(
    conv: Conversation,
    min_tokens: int = DEFAULT_MIN_TOKENS,
    spec: TokenizerSpec | None = None,
) -> FilterDecision:
    """Reject conversations strictly shorter than min_tokens."""
    if conv.status != "ok":
        raise ValidationError("heuristic_filter expects an ok conversation")
    n = count_tokens(conv.text, spec)
    if n < min_tokens:
        return FilterDecision(
            keep=False, reason=f"token_count {n} < {min_tokens}", token_count=n
        )
    return FilterDecision(keep=True, reason="", token_count=n)


def conversation_flags(conv: Conversation) -> list[str]:
    """Advisory flags: kept by default, rejected only under strict mode."""
    flags = []
    if not parse_turns(conv.text):
        flags.append("zero_turns")
    if conv.meta.get("truncated") == "true":
        flags.append("truncated")
    return flags


@dataclass
class QualityScore:
    correctness: int
    faithfulness: int
    information_preservation: int
    new_knowledge: int

    def __post_init__(self):
        for name in ("correctness", "faithfulness", "information_preservation", "new_knowledge"):
            v = getattr(self, name)
            if not isinstance(v, int) or not 1 <= v <= 5:
                raise ValidationError(f"{name} must be an integer in 1..5, got {v!r}")

    @property
    def mean(self) -> float:
        return (
            self.correctness
            + self.faithfulness
            + self.information_preservation
            + self.new_knowledge
        ) / 4

    def to_record(self) -> dict:
        return {
            "correctness": self.correctness,
            "faithfulness": self.faithfulness,
            "information_preservation": self.information_preservation,
            "new_knowledge": self.new_knowledge,
            "mean": self.mean,
        }


_METRIC_PATTERNS = {
    "correctness": r"correctness",
    "faithfulness": r"faithfulness",
    "information_preservation": r"information[\s_-]+preservation",
    "new_knowledge": r"new[\s_-]+knowledge",
}


def parse_score_response(text: str) -> QualityScore:
    """Pull the four 1-5 scores out of a judge reply.

    A metric counts as found when its name (case-insensitive) is followed by
    an integer; the first occurrence wins. Missing or out-of-range values
    raise ScoreParseError naming the offending metric.
    """
    values: dict[str, int] = {}
    for metric, name_pat in _METRIC_PATTERNS.items():
        m = re.search(rf"{name_pat}[^\d\n]{{0,16}}(\d+)", text, re.IGNORECASE)
        if not m:
            raise ScoreParseError(metric, f"no score found for {metric!r}")
        value = int(m.group(1))
        if not 1 <= value <= 5:
            raise ScoreParseError(
                metric, f"score for {metric!r} out of range 1..5: {value}"
            )
        values[metric] = value
    return QualityScore(**values)


def build_judge_prompt(context: str, conversation_text: str) -> str:
    if not context or not conversation_text:
        raise ValidationError("judge prompt needs nonempty context and conversation")
    return judge_rubric_template().format(
        context=context, conversation=conversation_text
    )


def score_conversation(
    context: str,
    conv: Conversation,
    judge,
    cfg: GenerationConfig | None = None,
    spec: TokenizerSpec | None = None,
) -> QualityScore:
    """Ask the judge endpoint for rubric scores; raises on unusable replies."""
    cfg = cfg or GenerationConfig(model_name="judge", temperature=0.0)
    prompt = build_judge_prompt(context, conv.text)
    budget = max_output_budget(count_tokens(prompt, spec), cfg)
    request = build_request(prompt, cfg, min(budget, 256))
    reply: CompletionReply
    reply, _ = complete_with_retries(judge, request, cfg)
    return parse_score_response(reply.text)


def quality_gate(score: QualityScore, threshold: float = DEFAULT_QUALITY_THRESHOLD) -> bool:
    """Keep when the four-metric mean reaches the threshold."""
    return score.mean >= threshold
