"""Core records for the reference bank, queries, triads, datasets and run configuration."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from config.constants import (
    DEFAULT_BAND_BOUNDARY_PROBE,
    DEFAULT_BAND_HARD_NEGATIVE,
    DEFAULT_DELTA,
    DEFAULT_M,
    DEFAULT_MOCK_CONFIDENCE,
    DEFAULT_MOCK_RELIABILITY,
    DEFAULT_P,
    DEFAULT_PARALLEL,
    DEFAULT_SEED,
    DEFAULT_T,
    DEFAULT_TAU_DUP,
    DEFAULT_TIMEOUT_SECONDS,
    DEFAULT_TOKEN_ENV,
    RETRY_ATTEMPTS,
    RETRY_BACKOFF_SECONDS,
)


class Vote(str, Enum):
    A = "A"
    B = "B"
    ABSTAIN = "abstain"

    @property
    def token(self) -> str:
        """Single-character form used inside prompts and model replies."""
        return "-" if self is Vote.ABSTAIN else self.value

    @property
    def committed(self) -> bool:
        return self is not Vote.ABSTAIN

    def other(self) -> "Vote":
        if self is Vote.A:
            return Vote.B
        if self is Vote.B:
            return Vote.A
        return Vote.ABSTAIN


class Role(str, Enum):
    ANCHOR = "anchor"
    HARD_NEGATIVE = "hard_negative"
    BOUNDARY_PROBE = "boundary_probe"

    @property
    def order(self) -> int:
        return _ROLE_INDEX[self]


_ROLE_INDEX = {Role.ANCHOR: 0, Role.HARD_NEGATIVE: 1, Role.BOUNDARY_PROBE: 2}


# Fallback tags recorded on triad members and triads.
FALLBACK_GATE_EMPTY = "gate_empty"
FALLBACK_DOC_RELAXED = "doc_relaxed"
FALLBACK_BAND_EXPANDED = "band_expanded"
FALLBACK_POOL_DEGRADED = "pool_degraded"


# ---------------------------------------------------------------------------
# Bank and triad records (hold numpy arrays, so plain dataclasses)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BankEntry:
    """One reference image: id, source document, caption, modality and embedding row."""

    id: str
    doc_id: str
    caption: str
    modality: Optional[str]
    embedding: np.ndarray = field(repr=False, compare=False)
    path: Optional[str] = None


@dataclass(frozen=True)
class QueryContext:
    """Query image plus the binary question asked about it."""

    query_id: str
    query_embedding: np.ndarray = field(repr=False, compare=False)
    question_text: str
    option_a: str
    option_b: str
    image_path: Optional[str] = None

    def __post_init__(self) -> None:
        from utils.exceptions import ValidationError

        if not self.question_text.strip():
            raise ValidationError(f"query {self.query_id!r}: question text is empty")
        if self.option_a == self.option_b:
            raise ValidationError(f"query {self.query_id!r}: option_a and option_b are identical")


@dataclass(frozen=True)
class ScoreBreakdown:
    kappa: int
    s_xr: float
    s_rr1: float
    score: float


@dataclass(frozen=True)
class TriadMember:
    entry: BankEntry
    role: Role
    similarity_to_query: float
    rank: int
    score_breakdown: Optional[ScoreBreakdown] = None
    fallback_applied: Tuple[str, ...] = ()

    def to_record(self) -> Dict[str, Any]:
        """Serializable view. Captions are deliberately absent."""
        record: Dict[str, Any] = {
            "role": self.role.value,
            "id": self.entry.id,
            "doc_id": self.entry.doc_id,
            "rank": self.rank,
            "similarity": self.similarity_to_query,
            "fallbacks": list(self.fallback_applied),
        }
        if self.score_breakdown is not None:
            sb = self.score_breakdown
            record["score_breakdown"] = {
                "kappa": sb.kappa,
                "s_xr": sb.s_xr,
                "s_rr1": sb.s_rr1,
                "score": sb.score,
            }
        return record


@dataclass(frozen=True)
class Triad:
    query_id: str
    members: Tuple[TriadMember, ...]
    modality: Optional[str] = None
    fallbacks: Tuple[str, ...] = ()

    def member(self, role: Role) -> Optional[TriadMember]:
        for member in self.members:
            if member.role is role:
                return member
        return None

    @property
    def ids(self) -> List[str]:
        return [m.entry.id for m in self.members]

    def to_record(self) -> Dict[str, Any]:
        return {
            "query_id": self.query_id,
            "modality": self.modality,
            "fallbacks": list(self.fallbacks),
            "members": [m.to_record() for m in self.members],
        }


# ---------------------------------------------------------------------------
# File records
# ---------------------------------------------------------------------------

class ManifestRecord(BaseModel):
    """One JSON-Lines row of a bank manifest."""

    model_config = ConfigDict(extra="ignore")

    id: str = Field(min_length=1)
    doc_id: Optional[str] = None
    caption: Optional[str] = ""
    modality: Optional[str] = None
    embedding: Optional[List[float]] = None
    row: Optional[int] = Field(default=None, ge=0)
    path: Optional[str] = None

    @model_validator(mode="after")
    def _one_embedding_source(self) -> "ManifestRecord":
        if (self.embedding is None) == (self.row is None):
            raise ValueError("record needs exactly one of 'embedding' or 'row'")
        return self


class ImageRecord(BaseModel):
    model_config = ConfigDict(extra="ignore")

    id: str = Field(min_length=1)
    path: Optional[str] = None
    embedding: Optional[List[float]] = None
    row: Optional[int] = Field(default=None, ge=0)

    @model_validator(mode="after")
    def _one_embedding_source(self) -> "ImageRecord":
        if (self.embedding is None) == (self.row is None):
            raise ValueError(f"image {self.id!r} needs exactly one of 'embedding' or 'row'")
        return self

    def as_array(self) -> np.ndarray:
        if self.embedding is None:
            raise ValueError(f"image {self.id!r} embedding was not resolved")
        return np.asarray(self.embedding, dtype=np.float32)


class ConfusionPair(BaseModel):
    """Two visually confusable images sharing one question."""

    model_config = ConfigDict(extra="ignore")

    pair_id: str = Field(min_length=1)
    category: str = "uncategorized"
    question: str = Field(min_length=1)
    option_a: str
    option_b: str
    image_1: ImageRecord
    image_2: ImageRecord
    answer_1: Literal["A", "B"]
    answer_2: Literal["A", "B"]

    @model_validator(mode="after")
    def _distinct_images(self) -> "ConfusionPair":
        if self.image_1.id == self.image_2.id:
            raise ValueError(f"pair {self.pair_id!r}: image_1 and image_2 share id {self.image_1.id!r}")
        return self

    def truth(self, index: int) -> Vote:
        return Vote(self.answer_1 if index == 1 else self.answer_2)

    def image(self, index: int) -> ImageRecord:
        return self.image_1 if index == 1 else self.image_2

    def query_context(self, index: int) -> QueryContext:
        image = self.image(index)
        return QueryContext(
            query_id=image.id,
            query_embedding=image.as_array(),
            question_text=self.question,
            option_a=self.option_a,
            option_b=self.option_b,
            image_path=image.path,
        )


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

class Thresholds(BaseModel):
    """Confidence floor p, mass floor t, margin floor m, ambiguity half-width delta."""

    model_config = ConfigDict(frozen=True)

    p: float = Field(default=DEFAULT_P, ge=0, le=100, allow_inf_nan=False)
    t: float = Field(default=DEFAULT_T, ge=0, allow_inf_nan=False)
    m: float = Field(default=DEFAULT_M, ge=0, allow_inf_nan=False)
    delta: float = Field(default=DEFAULT_DELTA, ge=0, le=0.5, allow_inf_nan=False)


class SelectionConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    band_hard_negative: Tuple[int, int] = DEFAULT_BAND_HARD_NEGATIVE
    band_boundary_probe: Tuple[int, int] = DEFAULT_BAND_BOUNDARY_PROBE
    tau_dup: float = Field(default=DEFAULT_TAU_DUP, gt=0, le=1)

    @field_validator("band_hard_negative", "band_boundary_probe")
    @classmethod
    def _valid_band(cls, value: Tuple[int, int]) -> Tuple[int, int]:
        lo, hi = value
        if lo < 1 or hi < lo:
            raise ValueError(f"rank band {value} must satisfy 1 <= a <= b")
        return value


class MockConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    reliability: Dict[Role, float] = Field(
        default_factory=lambda: {role: DEFAULT_MOCK_RELIABILITY for role in Role}
    )
    confidence_range: Tuple[int, int] = DEFAULT_MOCK_CONFIDENCE
    adjudicator: Literal["abstain", "fixture"] = "fixture"
    adjudicator_reliability: float = Field(default=DEFAULT_MOCK_RELIABILITY, ge=0, le=1)

    @field_validator("reliability")
    @classmethod
    def _probabilities(cls, value: Dict[Role, float]) -> Dict[Role, float]:
        for role, q in value.items():
            if not 0.0 <= q <= 1.0:
                raise ValueError(f"reliability for {role.value} must lie in [0, 1], got {q}")
        return value

    @field_validator("confidence_range")
    @classmethod
    def _range(cls, value: Tuple[int, int]) -> Tuple[int, int]:
        lo, hi = value
        if not 0 <= lo <= hi <= 100:
            raise ValueError(f"confidence range {value} must satisfy 0 <= lo <= hi <= 100")
        return value


class HttpEngineConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    endpoint: str = "https://openrouter.ai/api/v1/chat/completions"
    model: str = "google/gemini-2.0-pro-exp-02-05"
    token_env: str = DEFAULT_TOKEN_ENV
    timeout: float = Field(default=DEFAULT_TIMEOUT_SECONDS, gt=0)
    image_root: Optional[str] = None
    max_tokens: int = Field(default=1024, gt=0)
    temperature: float = 0.0


class PipelineConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    thresholds: Thresholds = Field(default_factory=Thresholds)
    selection: SelectionConfig = Field(default_factory=SelectionConfig)
    seed: int = DEFAULT_SEED
    backend: Literal["mock", "http"] = "mock"
    parallel: int = Field(default=DEFAULT_PARALLEL, ge=1)
    retrieval: Literal["triad", "topk"] = "triad"
    drop_roles: Tuple[Role, ...] = ()
    use_text_adjudicator: bool = True
    use_pair_adjudicator: bool = True
    retry_attempts: int = Field(default=RETRY_ATTEMPTS, ge=1)
    retry_backoff: float = Field(default=RETRY_BACKOFF_SECONDS, ge=0)

    def with_thresholds(self, **changes: float) -> "PipelineConfig":
        thresholds = Thresholds(**{**self.thresholds.model_dump(), **changes})
        return self.model_copy(update={"thresholds": thresholds})

    def report_record(self) -> Dict[str, Any]:
        """Run settings carried into metric reports."""
        return {
            **self.thresholds.model_dump(),
            "tau_dup": self.selection.tau_dup,
            "seed": self.seed,
            "backend": self.backend,
            "retrieval": self.retrieval,
            "drop_roles": [role.value for role in self.drop_roles],
            "use_text_adjudicator": self.use_text_adjudicator,
            "use_pair_adjudicator": self.use_pair_adjudicator,
        }
