"""Per-pair results and the trace events recorded while producing them."""
from __future__ import annotations

from typing import Any, Dict, List, Optional, TypedDict

from pydantic import BaseModel, Field

from models.responses import ComparisonOutcome, Decision
from models.schemas import Vote


class TraceEvent(TypedDict, total=False):
    """One stage of a pair run."""
    stage: str                  # select, compare, aggregate, decide, text_adjudicate, posterior, pair_trigger, pair_adjudicate, final
    image: Optional[int]        # 1 or 2; None for pair-level stages
    data: Dict[str, Any]


class PairResult(BaseModel):
    pair_id: str
    category: str = "uncategorized"
    image_1: str = ""
    image_2: str = ""
    decision_1: Decision
    decision_2: Decision
    posterior_1: Optional[float] = None
    posterior_2: Optional[float] = None
    adjudicated: bool = False
    final_1: Vote
    final_2: Vote
    outcomes_1: List[ComparisonOutcome] = Field(default_factory=list)
    outcomes_2: List[ComparisonOutcome] = Field(default_factory=list)
    trace: List[Dict[str, Any]] = Field(default_factory=list)
    trace_digest: str = ""
