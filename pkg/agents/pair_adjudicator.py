"""Pair-level adjudication of collapsed or ambiguous per-image decisions."""
from __future__ import annotations

import asyncio
from typing import Optional, Sequence, Tuple

from agents.comparator import cached_complete
from config.constants import RETRY_ATTEMPTS, RETRY_BACKOFF_SECONDS
from models.responses import AggregateState, EvidenceRecord
from models.schemas import ConfusionPair, Vote
from prompts import PAIR_ADJUDICATOR, load_template
from services.comparison_engine import ComparisonEngine, EngineRequest, RequestKind
from utils.caching import PAIR_REFERENCE, ResponseCache
from utils.exceptions import EngineError
from utils.logger import get_logger
from utils.parsers import parse_pair_answers

logger = get_logger(__name__)


def soft_posterior(agg: AggregateState) -> Optional[float]:
    """Share of kept mass on option A; None when no mass was kept."""
    if agg.total_w == 0:
        return None
    return agg.w_a / agg.total_w


def _ambiguous(posterior: Optional[float], delta: float) -> bool:
    return posterior is None or abs(posterior - 0.5) < delta


def needs_pair_adjudication(
    final_1: Vote,
    final_2: Vote,
    posterior_1: Optional[float],
    posterior_2: Optional[float],
    delta: float,
) -> bool:
    """Same committed label on both images, or either image ambiguous."""
    collapsed = final_1.committed and final_1 is final_2
    return collapsed or _ambiguous(posterior_1, delta) or _ambiguous(posterior_2, delta)


def describe_evidence(records: Sequence[EvidenceRecord]) -> str:
    """Single-line summary of an image's evidence records for the pair prompt."""
    parts = []
    for index, record in enumerate(records, start=1):
        fields = []
        if record.modality_anatomy:
            fields.append(f"modality/anatomy: {record.modality_anatomy}")
        if record.findings:
            fields.append("findings: " + "; ".join(record.findings))
        if record.differences:
            fields.append("differences: " + "; ".join(record.differences))
        if record.key_evidence:
            fields.append(f"key evidence: {record.key_evidence}")
        parts.append(f"[comparison {index}] " + (" | ".join(fields) if fields else "no evidence"))
    return " ".join(parts) if parts else "no evidence"


def describe_predictions(final_1: Vote, final_2: Vote) -> str:
    if final_1 is final_2:
        return final_1.token
    return f"Image1: {final_1.token}, Image2: {final_2.token}"


def _failure_policy(preds: Tuple[Vote, Vote]) -> Tuple[Vote, Vote]:
    if preds[0] is not preds[1]:
        return preds
    return Vote.ABSTAIN, Vote.ABSTAIN


async def pair_adjudicate(
    engine: ComparisonEngine,
    pair: ConfusionPair,
    evidence_1: Sequence[EvidenceRecord],
    evidence_2: Sequence[EvidenceRecord],
    preds: Tuple[Vote, Vote],
    cache: Optional[ResponseCache] = None,
    *,
    attempts: int = RETRY_ATTEMPTS,
    backoff: float = RETRY_BACKOFF_SECONDS,
    semaphore: Optional[asyncio.Semaphore] = None,
) -> Tuple[Tuple[Vote, Vote], bool]:
    """Return (final labels, reply parsed).

    When the engine fails or the reply lacks either label, differing
    predictions are kept and identical ones become a double abstention.
    """
    prompt = load_template(PAIR_ADJUDICATOR).render(
        {
            "q": pair.question,
            "a": pair.option_a,
            "b": pair.option_b,
            "meta1": describe_evidence(evidence_1),
            "meta2": describe_evidence(evidence_2),
            "pred": describe_predictions(*preds),
        }
    )
    request = EngineRequest(
        kind=RequestKind.PAIR,
        prompt=prompt,
        query_id=pair.pair_id,
        reference_id=PAIR_REFERENCE,
        image_ids=(pair.image_1.id, pair.image_2.id),
        image_paths=(pair.image_1.path, pair.image_2.path),
    )
    try:
        raw = await cached_complete(engine, request, cache, attempts=attempts, backoff=backoff, semaphore=semaphore)
    except EngineError as exc:
        logger.warning("Pair adjudication for %s failed: %s", pair.pair_id, exc)
        return _failure_policy(preds), False
    answers = parse_pair_answers(raw)
    if answers is None:
        logger.warning("Pair adjudication reply for %s is missing a label", pair.pair_id)
        return _failure_policy(preds), False
    return answers, True
