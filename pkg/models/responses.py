"""Comparison outcomes, aggregated evidence and per-image decisions."""
from __future__ import annotations

from enum import Enum
from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field, computed_field, model_validator

from models.schemas import Role, Vote


class ParseStatus(str, Enum):
    OK = "ok"
    DEGRADED = "degraded"
    FAILED = "failed"


class DiscardReason(str, Enum):
    ABSTAINED = "abstained"
    BELOW_P = "below_p"
    PARSE_FAILED = "parse_failed"


class Branch(str, Enum):
    INSUFFICIENT_MASS = "insufficient_mass"
    MARGIN_WIN = "margin_win"
    TEXT_ADJUDICATED = "text_adjudicated"
    ADJUDICATOR_ABSTAIN = "adjudicator_abstain"
    PENDING_ADJUDICATION = "pending_adjudication"
    # Low-margin resolution when the text adjudicator is switched off.
    MARGIN_ONLY = "margin_only"


class EvidenceRecord(BaseModel):
    modality_anatomy: str = ""
    findings: List[str] = Field(default_factory=list)
    differences: List[str] = Field(default_factory=list)
    key_evidence: str = ""
    raw_response: str = ""


class ComparisonOutcome(BaseModel):
    """Result of one query-versus-reference comparison."""

    vote: Vote
    confidence: int = Field(ge=0, le=100)
    evidence: EvidenceRecord = Field(default_factory=EvidenceRecord)
    reference_id: str = ""
    role: Optional[Role] = None
    parse_status: ParseStatus = ParseStatus.OK
    error: Optional[str] = None

    @model_validator(mode="after")
    def _failed_means_abstain(self) -> "ComparisonOutcome":
        if self.parse_status is ParseStatus.FAILED and (self.vote is not Vote.ABSTAIN or self.confidence != 0):
            raise ValueError("failed parses must carry vote=abstain and confidence=0")
        return self


class KeptVote(BaseModel):
    model_config = ConfigDict(frozen=True)

    vote: Vote
    confidence: int = Field(ge=0, le=100)
    reference_id: str = ""


class DiscardedVote(BaseModel):
    model_config = ConfigDict(frozen=True)

    vote: Vote
    confidence: int
    reference_id: str = ""
    reason: DiscardReason


class AggregateState(BaseModel):
    """Confidence-weighted evidence. All masses are exact integers."""

    w_a: int = Field(default=0, ge=0)
    w_b: int = Field(default=0, ge=0)
    kept_votes: List[KeptVote] = Field(default_factory=list)
    discarded: List[DiscardedVote] = Field(default_factory=list)

    @computed_field
    @property
    def total_w(self) -> int:
        return self.w_a + self.w_b

    @computed_field
    @property
    def margin(self) -> int:
        return abs(self.w_a - self.w_b)

    @computed_field
    @property
    def signed_score(self) -> int:
        return self.w_a - self.w_b


class Decision(BaseModel):
    label: Vote
    branch: Branch
    aggregate: AggregateState

    @property
    def pending(self) -> bool:
        return self.branch is Branch.PENDING_ADJUDICATION
