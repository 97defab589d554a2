from pathlib import Path
from types import SimpleNamespace

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_conversation
from mindpipe.errors import ScoreParseError, ValidationError
from mindpipe.filters import (
    QualityScore,
    build_judge_prompt,
    conversation_flags,
    heuristic_filter,
    parse_score_response,
    parse_turns,
    quality_gate,
    score_conversation,
    serialize_turns,
)
from mindpipe.genclient import GenerationConfig, MockChatClient

DIALOGUES = Path(__file__).parent / "data" / "dialogues"


class TestParseTurns:
    def test_plain_speaker_lines(self):
        turns = parse_turns("Alice: hi there\nBob: hello back\nAlice: bye")
        assert [(t.speaker, t.text) for t in turns] == [
            ("Alice", "hi there"),
            ("Bob", "hello back"),
            ("Alice", "bye"),
        ]
        assert [t.ordinal for t in turns] == [0, 1, 2]

    def test_bold_speaker_colon_inside(self):
        turns = parse_turns("**Teacher:** recall the rule\n**Student:** got it")
        assert [t.speaker for t in turns] == ["Teacher", "Student"]

    def test_bold_speaker_colon_outside(self):
        turns = parse_turns("**mzeta**: I disagree\n**hkron**: why though")
        assert [t.speaker for t in turns] == ["mzeta", "hkron"]
        assert turns[0].text == "I disagree"

    def test_turn_headers_group_plain_lines(self):
        text = (
            "**Turn 1**\n\nA: first point\n\nB: response\n\n"
            "**Turn 2**\n\nA: second point\n"
        )
        turns = parse_turns(text)
        assert [(t.speaker, t.text) for t in turns] == [
            ("A", "first point"),
            ("B", "response"),
            ("A", "second point"),
        ]

    def test_continuation_lines_attach_to_open_turn(self):
        turns = parse_turns("Alice: first line\nstill the same thought\nBob: reply")
        assert turns[0].text == "first line\nstill the same thought"
        assert turns[1].speaker == "Bob"

    def test_preamble_before_first_marker_dropped(self):
        turns = parse_turns("Here is a conversation.\n\nAlice: the real start")
        assert len(turns) == 1
        assert turns[0].speaker == "Alice"

    def test_zero_turns_is_valid(self):
        assert parse_turns("just prose, no markers at all") == []
        assert parse_turns("") == []

    def test_sentence_with_colon_is_not_a_speaker(self):
        # More than four words before the colon reads as prose, not a label.
        turns = parse_turns("The answer to the question is: forty-two")
        assert turns == []

    def test_urls_and_times_are_not_speakers(self):
        assert parse_turns("10:30 in the morning") == []
        assert parse_turns("see https://example.com/page") == []

    def test_bold_without_colon_is_continuation(self):
        # A typo like **name**L (stray letter, no colon) must not open a turn.
        text = "**A:** first\n**B**L malformed line that keeps going\n**C:** third"
        turns = parse_turns(text)
        assert [t.speaker for t in turns] == ["A", "C"]
        assert "malformed line" in turns[0].text


EXPECTED_TURNS = {
    "two_professors": 10,
    "teacher_student": 13,
    "two_students": 24,
    "interview": 7,
    "problem_solving": 11,
    "layman_knowall": 12,
    "debate": 7,
}


@pytest.mark.parametrize("name", sorted(EXPECTED_TURNS))
def test_example_dialogues_parse_to_hand_counts(name):
    text = (DIALOGUES / f"{name}.txt").read_text(encoding="utf-8")
    turns = parse_turns(text)
    assert len(turns) == EXPECTED_TURNS[name]
    assert all(t.speaker for t in turns)
    assert all(t.text for t in turns)


def test_serialize_turns_round_trips():
    text = "**Turn 1**\nAlice: hello   there\n  spread over\nBob: fine"
    turns = parse_turns(text)
    flat = serialize_turns(turns)
    reparsed = parse_turns(flat)
    assert [(t.speaker, " ".join(t.text.split())) for t in reparsed] == [
        (t.speaker, " ".join(t.text.split())) for t in turns
    ]


_speaker = st.text(alphabet="ABCDEFxyz", min_size=1, max_size=10)
_body = st.text(alphabet="abcdef ", min_size=1, max_size=30).filter(str.strip)


@given(st.lists(st.tuples(_speaker, _body), min_size=1, max_size=6))
def test_serialized_form_is_a_fixed_point(pairs):
    text = "\n".join(f"**{s}:** {b}" for s, b in pairs)
    turns = parse_turns(text)
    assert serialize_turns(turns) == serialize_turns(parse_turns(serialize_turns(turns)))


class TestHeuristicFilter:
    def test_at_threshold_keeps(self):
        conv = make_conversation(text=" ".join(["tok"] * 50))
        decision = heuristic_filter(conv, min_tokens=50)
        assert decision.keep is True
        assert decision.token_count == 50

    def test_below_threshold_rejects(self):
        conv = make_conversation(text=" ".join(["tok"] * 49))
        decision = heuristic_filter(conv, min_tokens=50)
        assert decision.keep is False
        assert decision.token_count == 49
        assert decision.reason == "token_count 49 < 50"

    def test_failed_record_is_an_error(self):
        conv = make_conversation(text="", status="failed", error="transport")
        with pytest.raises(ValidationError):
            heuristic_filter(conv)


def test_conversation_flags():
    assert conversation_flags(make_conversation(text="no markers here " * 20)) == [
        "zero_turns"
    ]
    assert conversation_flags(make_conversation(truncated="true")) == ["truncated"]
    assert conversation_flags(
        make_conversation(text="plain prose", truncated="true")
    ) == ["zero_turns", "truncated"]
    assert conversation_flags(make_conversation()) == []


class TestQualityScore:
    def test_mean(self):
        score = QualityScore(3, 4, 5, 2)
        assert score.mean == 3.5
        assert score.to_record()["mean"] == 3.5

    @pytest.mark.parametrize("bad", [0, 6, -1, 3.5, "4"])
    def test_rejects_out_of_range_or_non_int(self, bad):
        with pytest.raises(ValidationError):
            QualityScore(bad, 3, 3, 3)


class TestParseScoreResponse:
    def test_plain_block(self):
        score = parse_score_response(
            "Correctness: 4\nFaithfulness: 5\n"
            "Information Preservation: 3\nNew Knowledge: 2"
        )
        assert (score.correctness, score.faithfulness) == (4, 5)
        assert (score.information_preservation, score.new_knowledge) == (3, 2)

    def test_tolerates_case_underscores_and_chatter(self):
        score = parse_score_response(
            "Here are my ratings.\n"
            "correctness score is 3\n"
            "FAITHFULNESS - 4\n"
            "information_preservation: 5\n"
            "New knowledge rating: 1\n"
            "Overall quite good."
        )
        assert score.mean == 3.25

    def test_first_occurrence_wins(self):
        score = parse_score_response(
            "Correctness: 2\nCorrectness: 5\nFaithfulness: 3\n"
            "Information Preservation: 3\nNew Knowledge: 3"
        )
        assert score.correctness == 2

    def test_missing_metric_named(self):
        with pytest.raises(ScoreParseError, match="faithfulness") as exc_info:
            parse_score_response("Correctness: 4\nInformation Preservation: 3\nNew Knowledge: 3")
        assert exc_info.value.metric == "faithfulness"

    def test_out_of_range_named(self):
        with pytest.raises(ScoreParseError, match="new_knowledge"):
            parse_score_response(
                "Correctness: 4\nFaithfulness: 4\n"
                "Information Preservation: 4\nNew Knowledge: 7"
            )

    def test_value_on_next_line_does_not_count(self):
        with pytest.raises(ScoreParseError, match="correctness"):
            parse_score_response(
                "Correctness:\n4\nFaithfulness: 4\n"
                "Information Preservation: 4\nNew Knowledge: 4"
            )


class TestQualityGate:
    def test_mean_at_threshold_keeps(self):
        assert quality_gate(QualityScore(3, 3, 3, 3)) is True

    def test_mean_below_threshold_rejects(self):
        assert quality_gate(QualityScore(3, 3, 3, 2)) is False

    def test_boundary_is_inclusive_not_strict(self):
        # Gate semantics are mean >= threshold, exactly.
        assert quality_gate(SimpleNamespace(mean=3.00)) is True
        assert quality_gate(SimpleNamespace(mean=2.99)) is False

    def test_custom_threshold(self):
        assert quality_gate(QualityScore(3, 3, 3, 2), threshold=2.75) is True


def test_build_judge_prompt_fills_placeholders():
    prompt = build_judge_prompt("raw context", "**A:** dialogue")
    assert "raw context" in prompt
    assert "**A:** dialogue" in prompt
    with pytest.raises(ValidationError):
        build_judge_prompt("", "x")
    with pytest.raises(ValidationError):
        build_judge_prompt("x", "")


def test_score_conversation_with_mock_judge():
    judge = MockChatClient()
    conv = make_conversation(text="**A:** alpha beta\n**B:** gamma delta")
    score = score_conversation("context words", conv, judge)
    assert 1 <= score.correctness <= 5
    assert 3 <= score.mean <= 5
    again = score_conversation("context words", conv, judge)
    assert score.to_record() == again.to_record()


def test_score_conversation_unparseable_reply_raises():
    judge = MockChatClient(overrides=[("Rate the conversation", "no numbers here")])
    conv = make_conversation()
    with pytest.raises(ScoreParseError):
        score_conversation("context", conv, judge, GenerationConfig(model_name="judge"))
