"""Threshold sweeps replayed from a completed run's response cache."""
from __future__ import annotations

from typing import Any, List, Mapping, Optional, Sequence

from models.reports import SweepRow, SweepSpec
from models.schemas import ConfusionPair, PipelineConfig
from services.comparison_engine import ComparisonEngine, ReplayEngine
from services.reference_bank import ReferenceBank
from utils.caching import ResponseCache
from utils.logger import get_logger
from utils.metrics import compute_metrics
from workflows.pair_pipeline import PairPipeline

logger = get_logger(__name__)


async def sweep_thresholds(
    spec: SweepSpec,
    *,
    bank: ReferenceBank,
    pairs: Sequence[ConfusionPair],
    cache: ResponseCache,
    base_config: PipelineConfig | None = None,
    adjudicator: Optional[ComparisonEngine] = None,
    provenance: Optional[Mapping[str, Any]] = None,
) -> List[SweepRow]:
    """Re-run voting and adjudication for each swept value without new pairwise calls.

    Pairwise replies must all be in *cache* (ReplayError otherwise). Adjudication
    replies missing from the cache go to *adjudicator* when one is given.
    """
    base_config = base_config or PipelineConfig()
    engine = ReplayEngine(fallback=adjudicator)
    rows: List[SweepRow] = []
    for value in spec.values:
        thresholds = spec.thresholds_for(value)
        config = base_config.model_copy(update={"thresholds": thresholds})
        results = await PairPipeline(bank, engine, config, cache).run_dataset(pairs)
        report = compute_metrics(results, pairs, config=config.report_record(), provenance=provenance)
        logger.info(
            "Sweep %s=%s: set %.4f, abstention %.4f",
            spec.parameter,
            value,
            report.set_accuracy,
            report.abstention_rate,
        )
        rows.append(SweepRow(parameter=spec.parameter, value=value, report=report))
    return rows
