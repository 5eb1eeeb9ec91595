"""Query-versus-reference comparisons through a cached, retried engine."""
from __future__ import annotations

import asyncio
from contextlib import nullcontext
from typing import List, Optional, Sequence

from config.constants import RETRY_ATTEMPTS, RETRY_BACKOFF_SECONDS
from models.responses import ComparisonOutcome, EvidenceRecord, ParseStatus
from models.schemas import QueryContext, Role, Triad, TriadMember, Vote
from prompts import PAIRWISE_DISCRIMINATE, load_template
from services.comparison_engine import ComparisonEngine, EngineRequest, RequestKind, complete_with_retry
from utils.caching import ResponseCache, prompt_digest
from utils.exceptions import EngineError
from utils.logger import get_logger
from utils.parsers import parse_comparison_response

logger = get_logger(__name__)


async def cached_complete(
    engine: ComparisonEngine,
    request: EngineRequest,
    cache: Optional[ResponseCache],
    *,
    attempts: int = RETRY_ATTEMPTS,
    backoff: float = RETRY_BACKOFF_SECONDS,
    semaphore: Optional[asyncio.Semaphore] = None,
) -> str:
    """Cached raw reply for *request*, calling the engine only on a miss.

    Failed calls are never cached; the EngineError propagates to the caller.
    """
    digest = prompt_digest(request.prompt)
    if cache is not None:
        cached = cache.get(request.query_id, request.reference_id, digest)
        if cached is not None:
            return cached
    async with semaphore or nullcontext():
        raw = await complete_with_retry(engine, request, attempts=attempts, backoff=backoff)
    if cache is not None:
        await cache.put(request.query_id, request.reference_id, digest, raw)
    return raw


def pairwise_prompt(ctx: QueryContext) -> str:
    return load_template(PAIRWISE_DISCRIMINATE).render({"q": ctx.question_text, "a": ctx.option_a, "b": ctx.option_b})


async def compare(
    engine: ComparisonEngine,
    ctx: QueryContext,
    member: TriadMember,
    cache: Optional[ResponseCache] = None,
    *,
    attempts: int = RETRY_ATTEMPTS,
    backoff: float = RETRY_BACKOFF_SECONDS,
    semaphore: Optional[asyncio.Semaphore] = None,
) -> ComparisonOutcome:
    """Compare the query image of *ctx* against one triad member."""
    reference = member.entry
    request = EngineRequest(
        kind=RequestKind.PAIRWISE,
        prompt=pairwise_prompt(ctx),
        query_id=ctx.query_id,
        reference_id=reference.id,
        role=member.role,
        image_ids=(ctx.query_id, reference.id),
        image_paths=(ctx.image_path, reference.path),
    )
    try:
        raw = await cached_complete(engine, request, cache, attempts=attempts, backoff=backoff, semaphore=semaphore)
    except EngineError as exc:
        logger.warning("Comparison %s vs %s abstains after engine failure: %s", ctx.query_id, reference.id, exc)
        return ComparisonOutcome(
            vote=Vote.ABSTAIN,
            confidence=0,
            evidence=EvidenceRecord(),
            reference_id=reference.id,
            role=member.role,
            parse_status=ParseStatus.FAILED,
            error=str(exc),
        )
    outcome = parse_comparison_response(raw, reference_id=reference.id)
    if outcome.parse_status is not ParseStatus.OK:
        logger.debug("Comparison %s vs %s parsed as %s", ctx.query_id, reference.id, outcome.parse_status.value)
    return outcome.model_copy(update={"role": member.role})


async def compare_triad(
    engine: ComparisonEngine,
    ctx: QueryContext,
    triad: Triad,
    cache: Optional[ResponseCache] = None,
    *,
    drop_roles: Sequence[Role] = (),
    attempts: int = RETRY_ATTEMPTS,
    backoff: float = RETRY_BACKOFF_SECONDS,
    semaphore: Optional[asyncio.Semaphore] = None,
) -> List[ComparisonOutcome]:
    """Run every kept member's comparison concurrently; results come back in role order."""
    members = sorted((m for m in triad.members if m.role not in drop_roles), key=lambda m: m.role.order)
    return list(
        await asyncio.gather(
            *(
                compare(engine, ctx, member, cache, attempts=attempts, backoff=backoff, semaphore=semaphore)
                for member in members
            )
        )
    )
