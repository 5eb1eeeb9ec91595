import random

import pytest

from models.responses import EvidenceRecord, ParseStatus
from models.schemas import Vote
from utils.parsers import (
    format_comparison_response,
    format_final_answer,
    format_pair_answers,
    parse_comparison_response,
    parse_final_answer,
    parse_pair_answers,
    vote_from_token,
)

FULL_REPLY = """Modality and Anatomy: CT, chest

QUERY Findings:
- left pleural fluid
- compressive atelectasis
- no pneumothorax

Differences vs REFERENCE:
1. reference has clear costophrenic angles
2. reference lung bases are aerated

Answer: A

Confidence: 82

Key evidence: dependent fluid density at the left base
"""


@pytest.mark.parametrize(
    "raw, vote, confidence, status",
    [
        ("Answer: A\nConfidence: 80\n", Vote.A, 80, ParseStatus.DEGRADED),
        ("Answer: -\nConfidence: 0\n", Vote.ABSTAIN, 0, ParseStatus.DEGRADED),
        ("Answer: B\nConfidence: 150\n", Vote.B, 100, ParseStatus.DEGRADED),
        ("Answer: A\nConfidence: high\n", Vote.A, 0, ParseStatus.DEGRADED),
        ("I think it's A.", Vote.ABSTAIN, 0, ParseStatus.FAILED),
        ("Answer: A\nAnswer: B\nConfidence: 70\n", Vote.B, 70, ParseStatus.DEGRADED),
    ],
)
def test_comparison_examples(raw, vote, confidence, status):
    outcome = parse_comparison_response(raw)
    assert outcome.vote is vote
    assert outcome.confidence == confidence
    assert outcome.parse_status is status


def test_full_reply_parses_ok():
    outcome = parse_comparison_response(FULL_REPLY, reference_id="r7")
    assert outcome.parse_status is ParseStatus.OK
    assert outcome.vote is Vote.A and outcome.confidence == 82
    assert outcome.reference_id == "r7"
    evidence = outcome.evidence
    assert evidence.modality_anatomy == "CT, chest"
    assert evidence.findings == ["left pleural fluid", "compressive atelectasis", "no pneumothorax"]
    assert evidence.differences == ["reference has clear costophrenic angles", "reference lung bases are aerated"]
    assert evidence.key_evidence == "dependent fluid density at the left base"
    assert evidence.raw_response == FULL_REPLY


def test_failed_parse_reports_error():
    outcome = parse_comparison_response("nothing useful")
    assert outcome.error == "no valid Answer line"
    assert outcome.evidence.raw_response == "nothing useful"


def test_confidence_uses_first_digit_group_of_last_line():
    assert parse_comparison_response("Answer: A\nConfidence: 40\nConfidence: 65 (out of 100)\n").confidence == 65
    assert parse_comparison_response("Answer: A\nConfidence: 0085\n").confidence == 85
    assert parse_comparison_response("Answer: A\nConfidence: " + "9" * 400 + "\n").confidence == 100


@pytest.mark.parametrize("text, expected", [("85%", 85), ("85.5", 85), ("0.85", 0), ("~70 percent", 70)])
def test_confidence_keeps_integer_part_of_decorated_text(text, expected):
    assert parse_comparison_response(f"Answer: B\nConfidence: {text}\n").confidence == expected


@pytest.mark.parametrize(
    "token, expected",
    [
        ("A", Vote.A),
        (" b ", Vote.B),
        ("**A**", Vote.A),
        ("A.", Vote.A),
        ("-", Vote.ABSTAIN),
        ("—", Vote.ABSTAIN),
        ("⊥", Vote.ABSTAIN),
        ("Abstain", Vote.ABSTAIN),
        ("Apple", None),
        ("C", None),
        ("", None),
    ],
)
def test_vote_from_token(token, expected):
    assert vote_from_token(token) is expected


def test_markdown_decoration_is_tolerated():
    outcome = parse_comparison_response("**Answer:** B\n> Confidence: 61\n")
    assert outcome.vote is Vote.B and outcome.confidence == 61


def test_invalid_answer_value_is_skipped_for_earlier_valid_line():
    outcome = parse_comparison_response("Answer: B\nConfidence: 55\nAnswer: maybe\n")
    assert outcome.vote is Vote.B


def test_final_answer_parsing():
    assert parse_final_answer("reasoning...\nFinal Answer: B\n") is Vote.B
    assert parse_final_answer("Final Answer: A\nFinal Answer: -\n") is Vote.ABSTAIN
    assert parse_final_answer("Answer: A") is None


def test_pair_answer_parsing():
    assert parse_pair_answers("Final Answer Image1: A\nFinal Answer Image2: B\n") == (Vote.A, Vote.B)
    assert parse_pair_answers("Final Answer Image 1: -\nFinal Answer Image 2: A\n") == (Vote.ABSTAIN, Vote.A)
    assert parse_pair_answers("Final Answer Image1: A\n") is None


def test_formatters_round_trip_through_parsers():
    assert parse_final_answer(format_final_answer(Vote.B)) is Vote.B
    assert parse_pair_answers(format_pair_answers(Vote.A, Vote.ABSTAIN)) == (Vote.A, Vote.ABSTAIN)


def _random_evidence(rng):
    words = ["opacity", "effusion", "nodule", "fracture", "edema", "mass", "cyst", "line"]

    def phrase():
        return " ".join(rng.choice(words) for _ in range(rng.randint(1, 5)))

    return EvidenceRecord(
        modality_anatomy=f"{phrase()}, {phrase()}",
        findings=[phrase() for _ in range(3)],
        differences=[phrase() for _ in range(rng.randint(2, 4))],
        key_evidence=phrase(),
    )


def test_formatted_replies_parse_back():
    rng = random.Random(11)
    for _ in range(10_000):
        vote = rng.choice([Vote.A, Vote.B, Vote.ABSTAIN])
        confidence = rng.randint(0, 100)
        evidence = _random_evidence(rng)
        outcome = parse_comparison_response(format_comparison_response(vote, confidence, evidence))
        assert outcome.vote is vote
        assert outcome.confidence == confidence
        assert outcome.parse_status is ParseStatus.OK
        assert outcome.evidence.findings == evidence.findings
        assert outcome.evidence.differences == evidence.differences


def test_parser_never_raises_on_arbitrary_bytes():
    rng = random.Random(5)
    alphabet = b"AB-: \n\tConfidenceAnswerFinal0123456789*#\xff\xfe\x00"
    for i in range(100_000):
        size = rng.randint(0, 4096) if i % 100 == 0 else rng.randint(0, 64)
        if i % 2:
            raw = bytes(rng.choice(alphabet) for _ in range(size))
        else:
            raw = bytes(rng.getrandbits(8) for _ in range(size))
        outcome = parse_comparison_response(raw)
        assert 0 <= outcome.confidence <= 100
        if outcome.parse_status is ParseStatus.FAILED:
            assert outcome.vote is Vote.ABSTAIN and outcome.confidence == 0
