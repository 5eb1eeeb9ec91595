"""Pair- and image-level metrics with abstention, computed from exact counts."""
from __future__ import annotations

from collections import defaultdict
from fractions import Fraction
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence

from models.reports import CategoryMetrics, MetricsCounts, MetricsReport
from models.schemas import ConfusionPair, Vote
from models.state import PairResult
from utils.exceptions import ValidationError


def _ratio(numerator: int, denominator: int) -> Fraction:
    return Fraction(numerator, denominator) if denominator else Fraction(0)


def exact_metrics(counts: MetricsCounts) -> Dict[str, Fraction]:
    """Every headline metric as an exact fraction of the counts."""
    images = counts.images
    answered = images - counts.abstained_images
    return {
        "set_accuracy": _ratio(counts.correct_pairs, counts.pairs),
        "individual_accuracy": _ratio(counts.correct_images, images),
        "confusion_rate": _ratio(counts.confused_pairs, counts.pairs),
        "abstention_rate": _ratio(counts.abstained_images, images),
        "coverage": _ratio(answered, images),
        # Abstentions are never correct, so every correct image was answered.
        "conditional_accuracy": _ratio(counts.correct_images, answered),
    }


def count_outcomes(finals: Iterable[tuple[Vote, Vote, Vote, Vote]], adjudicated: int = 0) -> MetricsCounts:
    """Tally (final_1, final_2, truth_1, truth_2) tuples."""
    counts = MetricsCounts(adjudicated_pairs=adjudicated)
    for final_1, final_2, truth_1, truth_2 in finals:
        correct = int(final_1 is truth_1) + int(final_2 is truth_2)
        counts.pairs += 1
        counts.images += 2
        counts.abstained_images += int(not final_1.committed) + int(not final_2.committed)
        counts.correct_images += correct
        counts.correct_pairs += int(correct == 2)
        counts.confused_pairs += int(final_1.committed and final_1 is final_2)
    return counts


def _match(results: Sequence[PairResult], dataset: Sequence[ConfusionPair]) -> List[tuple[PairResult, ConfusionPair]]:
    if not dataset:
        raise ValidationError("dataset is empty")
    by_id: Dict[str, PairResult] = {}
    for result in results:
        if result.pair_id in by_id:
            raise ValidationError(f"pair {result.pair_id!r} has more than one result")
        by_id[result.pair_id] = result
    known = {pair.pair_id for pair in dataset}
    extra = sorted(set(by_id) - known)
    if extra:
        raise ValidationError(f"results mention pairs absent from the dataset: {extra[:5]}")
    missing = [pair.pair_id for pair in dataset if pair.pair_id not in by_id]
    if missing:
        raise ValidationError(
            f"results cover {len(dataset) - len(missing)} of {len(dataset)} dataset pairs; missing {missing[:5]}"
        )
    return [(by_id[pair.pair_id], pair) for pair in dataset]


def compute_metrics(
    results: Sequence[PairResult],
    dataset: Sequence[ConfusionPair],
    *,
    config: Optional[Mapping[str, Any]] = None,
    provenance: Optional[Mapping[str, Any]] = None,
) -> MetricsReport:
    matched = _match(results, dataset)
    rows = [(r.final_1, r.final_2, p.truth(1), p.truth(2)) for r, p in matched]
    counts = count_outcomes(rows, adjudicated=sum(r.adjudicated for r, _ in matched))

    by_category: Dict[str, List[tuple[Vote, Vote, Vote, Vote]]] = defaultdict(list)
    for row, (_, pair) in zip(rows, matched):
        by_category[pair.category].append(row)
    per_category = {}
    for category in sorted(by_category):
        cat_counts = count_outcomes(by_category[category])
        exact = exact_metrics(cat_counts)
        per_category[category] = CategoryMetrics(
            set_accuracy=float(exact["set_accuracy"]),
            individual_accuracy=float(exact["individual_accuracy"]),
            pairs=cat_counts.pairs,
        )

    exact = exact_metrics(counts)
    return MetricsReport(
        **{name: float(value) for name, value in exact.items()},
        per_category=per_category,
        counts=counts,
        config=dict(config or {}),
        provenance=dict(provenance or {}),
    )
