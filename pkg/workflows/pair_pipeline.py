"""End-to-end inference for confusion pairs: triads, comparisons, voting, adjudication."""
from __future__ import annotations

import asyncio
import hashlib
import json
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

from tqdm.asyncio import tqdm_asyncio

from agents.cci_engine import aggregate_weights, decide, decide_by_sign, filter_votes, text_adjudicate
from agents.comparator import compare_triad
from agents.pair_adjudicator import needs_pair_adjudication, pair_adjudicate, soft_posterior
from agents.triad_selector import select_triad
from models.responses import ComparisonOutcome, Decision
from models.schemas import ConfusionPair, PipelineConfig, QueryContext, Triad
from models.state import PairResult, TraceEvent
from services.comparison_engine import ComparisonEngine
from services.reference_bank import ReferenceBank
from utils.caching import ResponseCache
from utils.logger import get_logger

logger = get_logger(__name__)


def trace_digest(trace: Sequence[TraceEvent]) -> str:
    payload = json.dumps(list(trace), sort_keys=True, ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass
class ImageRun:
    ctx: QueryContext
    triad: Triad
    outcomes: List[ComparisonOutcome]
    decision: Decision
    posterior: Optional[float]
    events: List[TraceEvent]


class PairPipeline:
    """Runs pairs against one bank, engine and cache under a fixed configuration."""

    def __init__(
        self,
        bank: ReferenceBank,
        engine: ComparisonEngine,
        config: PipelineConfig | None = None,
        cache: Optional[ResponseCache] = None,
        *,
        semaphore: Optional[asyncio.Semaphore] = None,
    ) -> None:
        self.bank = bank
        self.engine = engine
        self.config = config or PipelineConfig()
        self.cache = cache
        self.semaphore = semaphore or asyncio.Semaphore(self.config.parallel)
        self._triads: Dict[Tuple[str, str, str, str], Triad] = {}

    def _engine_kwargs(self) -> Dict[str, Any]:
        return {
            "attempts": self.config.retry_attempts,
            "backoff": self.config.retry_backoff,
            "semaphore": self.semaphore,
        }

    def triad_for(self, ctx: QueryContext) -> Triad:
        # An image reused under another question gets its own triad.
        key = (ctx.query_id, ctx.question_text, ctx.option_a, ctx.option_b)
        triad = self._triads.get(key)
        if triad is None:
            triad = select_triad(self.bank, ctx, self.config.selection, retrieval=self.config.retrieval)
            self._triads[key] = triad
        return triad

    async def run_image(self, pair: ConfusionPair, index: int) -> ImageRun:
        ctx = pair.query_context(index)
        thresholds = self.config.thresholds
        events: List[TraceEvent] = []

        triad = self.triad_for(ctx)
        events.append({"stage": "select", "image": index, "data": triad.to_record()})

        outcomes = await compare_triad(
            self.engine, ctx, triad, self.cache, drop_roles=self.config.drop_roles, **self._engine_kwargs()
        )
        events.append(
            {
                "stage": "compare",
                "image": index,
                "data": {
                    "outcomes": [
                        {
                            "reference_id": o.reference_id,
                            "role": o.role.value if o.role else None,
                            "vote": o.vote.value,
                            "confidence": o.confidence,
                            "parse_status": o.parse_status.value,
                            "error": o.error,
                        }
                        for o in outcomes
                    ]
                },
            }
        )

        kept, discarded = filter_votes(outcomes, thresholds.p)
        agg = aggregate_weights(kept, discarded)
        events.append({"stage": "aggregate", "image": index, "data": {"p": thresholds.p, **agg.model_dump(mode="json")}})

        decision = decide(agg, thresholds)
        events.append(
            {
                "stage": "decide",
                "image": index,
                "data": {"t": thresholds.t, "m": thresholds.m, "branch": decision.branch.value, "label": decision.label.value},
            }
        )
        if decision.pending:
            if self.config.use_text_adjudicator:
                decision = await text_adjudicate(self.engine, ctx, outcomes, agg, self.cache, **self._engine_kwargs())
                stage = "text_adjudicate"
            else:
                decision = decide_by_sign(agg)
                stage = "margin_only"
            events.append(
                {"stage": stage, "image": index, "data": {"branch": decision.branch.value, "label": decision.label.value}}
            )

        posterior = soft_posterior(agg)
        events.append({"stage": "posterior", "image": index, "data": {"p_a": posterior}})
        logger.debug("Image %s: %s via %s", ctx.query_id, decision.label.value, decision.branch.value)
        return ImageRun(ctx=ctx, triad=triad, outcomes=outcomes, decision=decision, posterior=posterior, events=events)

    async def run_pair(self, pair: ConfusionPair) -> PairResult:
        first, second = await asyncio.gather(self.run_image(pair, 1), self.run_image(pair, 2))
        trace: List[TraceEvent] = [*first.events, *second.events]
        finals: Tuple = (first.decision.label, second.decision.label)
        delta = self.config.thresholds.delta

        triggered = needs_pair_adjudication(finals[0], finals[1], first.posterior, second.posterior, delta)
        trace.append(
            {
                "stage": "pair_trigger",
                "image": None,
                "data": {"triggered": triggered, "enabled": self.config.use_pair_adjudicator, "delta": delta},
            }
        )
        adjudicated = False
        if triggered and self.config.use_pair_adjudicator:
            finals, parsed = await pair_adjudicate(
                self.engine,
                pair,
                [o.evidence for o in first.outcomes],
                [o.evidence for o in second.outcomes],
                finals,
                self.cache,
                **self._engine_kwargs(),
            )
            adjudicated = True
            trace.append(
                {
                    "stage": "pair_adjudicate",
                    "image": None,
                    "data": {"parsed": parsed, "final_1": finals[0].value, "final_2": finals[1].value},
                }
            )

        trace.append(
            {
                "stage": "final",
                "image": None,
                "data": {
                    "category": pair.category,
                    "final_1": finals[0].value,
                    "final_2": finals[1].value,
                    "truth_1": pair.answer_1,
                    "truth_2": pair.answer_2,
                    "adjudicated": adjudicated,
                },
            }
        )
        return PairResult(
            pair_id=pair.pair_id,
            category=pair.category,
            image_1=pair.image_1.id,
            image_2=pair.image_2.id,
            decision_1=first.decision,
            decision_2=second.decision,
            posterior_1=first.posterior,
            posterior_2=second.posterior,
            adjudicated=adjudicated,
            final_1=finals[0],
            final_2=finals[1],
            outcomes_1=first.outcomes,
            outcomes_2=second.outcomes,
            trace=[dict(event) for event in trace],
            trace_digest=trace_digest(trace),
        )

    async def run_dataset(self, pairs: Sequence[ConfusionPair], *, progress: bool = False) -> List[PairResult]:
        """Run every pair concurrently; results keep dataset order."""
        results = await tqdm_asyncio.gather(
            *(self.run_pair(pair) for pair in pairs),
            desc="pairs",
            unit="pair",
            disable=not progress,
        )
        adjudicated = sum(r.adjudicated for r in results)
        logger.info("Finished %d pairs (%d pair-adjudicated)", len(results), adjudicated)
        return list(results)


async def run_pair(
    config: PipelineConfig,
    bank: ReferenceBank,
    pair: ConfusionPair,
    engine: ComparisonEngine,
    cache: Optional[ResponseCache] = None,
) -> PairResult:
    return await PairPipeline(bank, engine, config, cache).run_pair(pair)


async def run_dataset(
    config: PipelineConfig,
    bank: ReferenceBank,
    pairs: Sequence[ConfusionPair],
    engine: ComparisonEngine,
    cache: Optional[ResponseCache] = None,
    *,
    progress: bool = False,
) -> List[PairResult]:
    return await PairPipeline(bank, engine, config, cache).run_dataset(pairs, progress=progress)
