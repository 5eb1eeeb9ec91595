"""Parsing and formatting of model replies in the pairwise, aggregate and pair-adjudicator formats."""
from __future__ import annotations

import re
from typing import Iterable, List, Optional, Tuple

from models.responses import ComparisonOutcome, EvidenceRecord, ParseStatus
from models.schemas import Vote

_DECORATION = "*#>`\t •‣·"
_ABSTAIN_MARKS = ("-", "−", "–", "—", "⊥")
_ENUMERATOR_RE = re.compile(r"^\(?\d{1,2}[.)]\s+")
_DIGITS_RE = re.compile(r"\d+")

_ANSWER_RE = re.compile(r"^(?:final\s+)?answer\s*\**\s*:\s*\**\s*(?P<value>.*)$", re.IGNORECASE)
_FINAL_ANSWER_RE = re.compile(r"^final\s+answer\s*\**\s*:\s*\**\s*(?P<value>.*)$", re.IGNORECASE)
_PAIR_ANSWER_RE = re.compile(
    r"^final\s+answer\s+image\s*(?P<index>[12])\s*\**\s*:\s*\**\s*(?P<value>.*)$", re.IGNORECASE
)
_CONFIDENCE_RE = re.compile(r"^confidence\s*\**\s*:\s*\**\s*(?P<value>.*)$", re.IGNORECASE)
_MODALITY_RE = re.compile(r"^modality\s+and\s+anatomy\s*\**\s*:\s*\**\s*(?P<value>.*)$", re.IGNORECASE)
_KEY_EVIDENCE_RE = re.compile(r"^key\s+evidence\s*\**\s*:\s*\**\s*(?P<value>.*)$", re.IGNORECASE)
_FINDINGS_RE = re.compile(r"^query\s+findings\s*\**\s*:?\s*\**\s*$", re.IGNORECASE)
_DIFFERENCES_RE = re.compile(r"^differences\s+vs\.?\s+reference\s*\**\s*:?\s*\**\s*$", re.IGNORECASE)


def _strip_bullet_prefix(value: str) -> str:
    stripped = value.strip().lstrip("-*\t •‣·")
    return _ENUMERATOR_RE.sub("", stripped).strip()


def _clean(line: str) -> str:
    return line.strip().lstrip(_DECORATION).strip()


def vote_from_token(value: str) -> Optional[Vote]:
    """Map an answer token ("A", "B", "-") to a vote; None when unrecognised."""
    token = value.strip().strip("*_\"'`<>()[]").strip()
    if not token:
        return None
    if token.startswith(_ABSTAIN_MARKS) or token.lower().startswith("abstain"):
        return Vote.ABSTAIN
    head = token[0].upper()
    if head in ("A", "B") and (len(token) == 1 or not token[1].isalnum()):
        return Vote(head)
    return None


def _last_vote(lines: Iterable[str], pattern: re.Pattern[str]) -> Optional[Vote]:
    vote: Optional[Vote] = None
    for line in lines:
        match = pattern.match(line)
        if match:
            parsed = vote_from_token(match.group("value"))
            if parsed is not None:
                vote = parsed
    return vote


def _parse_confidence(lines: Iterable[str]) -> Optional[int]:
    """Integer from the first digit run of the last Confidence line, clamped to 100.

    Decorations such as "85%" or "65 (out of 100)" are ignored; fractional text
    keeps its integer part, so "0.85" reads as 0 and "85.5" as 85.
    """
    confidence: Optional[int] = None
    for line in lines:
        match = _CONFIDENCE_RE.match(line)
        if not match:
            continue
        digits = _DIGITS_RE.search(match.group("value"))
        if digits:
            significant = digits.group(0).lstrip("0") or "0"
            confidence = 100 if len(significant) > 3 else min(100, int(significant))
    return confidence


def _parse_evidence(lines: List[str], raw: str) -> EvidenceRecord:
    modality = ""
    key_evidence = ""
    findings: List[str] = []
    differences: List[str] = []
    section: Optional[List[str]] = None
    for line in lines:
        if not line:
            continue
        if _FINDINGS_RE.match(line):
            section = findings
            continue
        if _DIFFERENCES_RE.match(line):
            section = differences
            continue
        match = _MODALITY_RE.match(line)
        if match:
            modality = match.group("value").strip()
            section = None
            continue
        match = _KEY_EVIDENCE_RE.match(line)
        if match:
            key_evidence = match.group("value").strip()
            section = None
            continue
        if _ANSWER_RE.match(line) or _CONFIDENCE_RE.match(line):
            section = None
            continue
        if section is not None:
            item = _strip_bullet_prefix(line)
            if item:
                section.append(item)
    return EvidenceRecord(
        modality_anatomy=modality,
        findings=findings,
        differences=differences,
        key_evidence=key_evidence,
        raw_response=raw,
    )


def _evidence_complete(evidence: EvidenceRecord) -> bool:
    return (
        bool(evidence.modality_anatomy)
        and len(evidence.findings) == 3
        and 2 <= len(evidence.differences) <= 4
        and bool(evidence.key_evidence)
    )


def _as_text(raw: str | bytes) -> str:
    if isinstance(raw, bytes):
        return raw.decode("utf-8", errors="replace")
    return raw if isinstance(raw, str) else str(raw)


def parse_comparison_response(raw: str | bytes, *, reference_id: str = "") -> ComparisonOutcome:
    """Parse a pairwise reply. Never raises; problems are reported through parse_status."""
    text = _as_text(raw)
    lines = [_clean(line) for line in text.splitlines()]
    vote = _last_vote(lines, _ANSWER_RE)
    if vote is None:
        return ComparisonOutcome(
            vote=Vote.ABSTAIN,
            confidence=0,
            evidence=EvidenceRecord(raw_response=text),
            reference_id=reference_id,
            parse_status=ParseStatus.FAILED,
            error="no valid Answer line",
        )
    confidence = _parse_confidence(lines)
    evidence = _parse_evidence(lines, text)
    status = ParseStatus.OK if confidence is not None and _evidence_complete(evidence) else ParseStatus.DEGRADED
    return ComparisonOutcome(
        vote=vote,
        confidence=confidence if confidence is not None else 0,
        evidence=evidence,
        reference_id=reference_id,
        parse_status=status,
    )


def parse_final_answer(raw: str | bytes) -> Optional[Vote]:
    """Label from the last "Final Answer:" line of an aggregate-decision reply."""
    lines = [_clean(line) for line in _as_text(raw).splitlines()]
    return _last_vote(lines, _FINAL_ANSWER_RE)


def parse_pair_answers(raw: str | bytes) -> Optional[Tuple[Vote, Vote]]:
    """Both labels from a pair-adjudicator reply, or None if either is missing."""
    found: dict[str, Vote] = {}
    for line in _as_text(raw).splitlines():
        match = _PAIR_ANSWER_RE.match(_clean(line))
        if match:
            vote = vote_from_token(match.group("value"))
            if vote is not None:
                found[match.group("index")] = vote
    if "1" not in found or "2" not in found:
        return None
    return found["1"], found["2"]


def format_comparison_response(vote: Vote, confidence: int, evidence: EvidenceRecord) -> str:
    """Render a reply in the exact pairwise output format."""
    blocks = [f"Modality and Anatomy: {evidence.modality_anatomy}", "QUERY Findings:"]
    blocks.extend(evidence.findings)
    blocks.append("Differences vs REFERENCE:")
    blocks.extend(evidence.differences)
    blocks.append(f"Answer: {vote.token}")
    blocks.append(f"Confidence: {int(confidence)}")
    blocks.append(f"Key evidence: {evidence.key_evidence}")
    return "\n\n".join(blocks) + "\n"


def format_final_answer(vote: Vote) -> str:
    return f"Final Answer: {vote.token}\n"


def format_pair_answers(vote_1: Vote, vote_2: Vote, *, assessment: str = "see findings") -> str:
    return (
        f"Visual assessment Image 1: {assessment}\n"
        f"Visual assessment Image 2: {assessment}\n\n"
        f"Do observed differences justify different answers? {'No' if vote_1 is vote_2 else 'Yes'}\n\n"
        f"Final Answer Image1: {vote_1.token}\n"
        f"Final Answer Image2: {vote_2.token}\n"
    )
