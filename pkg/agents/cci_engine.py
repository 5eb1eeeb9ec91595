"""Confidence-filtered voting with a mass floor, a margin floor and text adjudication."""
from __future__ import annotations

import asyncio
from typing import Iterable, List, Optional, Sequence, Tuple

from agents.comparator import cached_complete
from config.constants import RETRY_ATTEMPTS, RETRY_BACKOFF_SECONDS
from models.responses import (
    AggregateState,
    Branch,
    ComparisonOutcome,
    Decision,
    DiscardedVote,
    DiscardReason,
    KeptVote,
    ParseStatus,
)
from models.schemas import QueryContext, Role, Thresholds, Vote
from prompts import AGGREGATE_DECISION, load_template
from services.comparison_engine import ComparisonEngine, EngineRequest, RequestKind
from utils.caching import AGGREGATE_REFERENCE, ResponseCache
from utils.exceptions import EngineError
from utils.logger import get_logger
from utils.parsers import parse_final_answer

logger = get_logger(__name__)


def filter_votes(outcomes: Iterable[ComparisonOutcome], p: float) -> Tuple[List[KeptVote], List[DiscardedVote]]:
    """Keep committed votes with confidence >= p; everything else is discarded with a reason."""
    kept: List[KeptVote] = []
    discarded: List[DiscardedVote] = []
    for outcome in outcomes:
        if outcome.parse_status is ParseStatus.FAILED:
            reason = DiscardReason.PARSE_FAILED
        elif not outcome.vote.committed:
            reason = DiscardReason.ABSTAINED
        elif outcome.confidence < p:
            reason = DiscardReason.BELOW_P
        else:
            kept.append(KeptVote(vote=outcome.vote, confidence=outcome.confidence, reference_id=outcome.reference_id))
            continue
        discarded.append(
            DiscardedVote(
                vote=outcome.vote,
                confidence=outcome.confidence,
                reference_id=outcome.reference_id,
                reason=reason,
            )
        )
    return kept, discarded


def aggregate_weights(kept: Iterable[KeptVote], discarded: Sequence[DiscardedVote] = ()) -> AggregateState:
    kept = list(kept)
    w_a = sum(v.confidence for v in kept if v.vote is Vote.A)
    w_b = sum(v.confidence for v in kept if v.vote is Vote.B)
    return AggregateState(w_a=w_a, w_b=w_b, kept_votes=kept, discarded=list(discarded))


def signed_score(kept: Iterable[KeptVote]) -> int:
    """Sum of confidence times +1 for A and -1 for B."""
    return sum(v.confidence if v.vote is Vote.A else -v.confidence for v in kept if v.vote.committed)


def decide(agg: AggregateState, thresholds: Thresholds) -> Decision:
    """Apply the mass and margin floors.

    Low-margin inputs come back as PENDING_ADJUDICATION, and so does an exact
    tie even when m is 0.
    """
    if agg.total_w < thresholds.t:
        return Decision(label=Vote.ABSTAIN, branch=Branch.INSUFFICIENT_MASS, aggregate=agg)
    if agg.margin >= thresholds.m and agg.margin > 0:
        label = Vote.A if agg.w_a > agg.w_b else Vote.B
        return Decision(label=label, branch=Branch.MARGIN_WIN, aggregate=agg)
    return Decision(label=Vote.ABSTAIN, branch=Branch.PENDING_ADJUDICATION, aggregate=agg)


def decide_by_sign(agg: AggregateState) -> Decision:
    """Resolve a pending decision from the signed score alone; a tie abstains."""
    score = agg.signed_score
    label = Vote.A if score > 0 else Vote.B if score < 0 else Vote.ABSTAIN
    return Decision(label=label, branch=Branch.MARGIN_ONLY, aggregate=agg)


def serialize_votes(outcomes: Iterable[ComparisonOutcome]) -> str:
    """One line per comparison, in role order: role, vote, confidence and key evidence."""
    ordered = sorted(
        outcomes,
        key=lambda o: (o.role.order if o.role is not None else len(Role), o.reference_id),
    )
    lines = []
    for index, outcome in enumerate(ordered, start=1):
        role = outcome.role.value if outcome.role is not None else "reference"
        evidence = outcome.evidence.key_evidence or "none"
        lines.append(
            f"Comparison {index} ({role}): Answer: {outcome.vote.token}, "
            f"Confidence: {outcome.confidence}, Key evidence: {evidence}"
        )
    return "\n".join(lines)


async def text_adjudicate(
    engine: ComparisonEngine,
    ctx: QueryContext,
    outcomes: Sequence[ComparisonOutcome],
    agg: AggregateState,
    cache: Optional[ResponseCache] = None,
    *,
    attempts: int = RETRY_ATTEMPTS,
    backoff: float = RETRY_BACKOFF_SECONDS,
    semaphore: Optional[asyncio.Semaphore] = None,
) -> Decision:
    """Ask the engine, text only, to reconcile low-margin votes."""
    prompt = load_template(AGGREGATE_DECISION).render(
        {
            "n": str(len(outcomes)),
            "q": ctx.question_text,
            "a": ctx.option_a,
            "b": ctx.option_b,
            "votes": serialize_votes(outcomes),
        }
    )
    request = EngineRequest(
        kind=RequestKind.AGGREGATE,
        prompt=prompt,
        query_id=ctx.query_id,
        reference_id=AGGREGATE_REFERENCE,
    )
    try:
        raw = await cached_complete(engine, request, cache, attempts=attempts, backoff=backoff, semaphore=semaphore)
    except EngineError as exc:
        logger.warning("Text adjudication for %s abstains after engine failure: %s", ctx.query_id, exc)
        return Decision(label=Vote.ABSTAIN, branch=Branch.ADJUDICATOR_ABSTAIN, aggregate=agg)
    label = parse_final_answer(raw)
    if label is None or not label.committed:
        return Decision(label=Vote.ABSTAIN, branch=Branch.ADJUDICATOR_ABSTAIN, aggregate=agg)
    return Decision(label=label, branch=Branch.TEXT_ADJUDICATED, aggregate=agg)
