import random
from fractions import Fraction

import pytest

from models.responses import AggregateState, Branch, Decision
from models.schemas import ConfusionPair, Vote
from models.state import PairResult
from utils.exceptions import ValidationError
from utils.metrics import compute_metrics, count_outcomes, exact_metrics

A, B, X = Vote.A, Vote.B, Vote.ABSTAIN


def make_pair(pair_id, truth, category="lung"):
    return ConfusionPair(
        pair_id=pair_id,
        category=category,
        question="Is there an effusion?",
        option_a="yes",
        option_b="no",
        image_1={"id": f"{pair_id}_1", "embedding": [1.0, 0.0]},
        image_2={"id": f"{pair_id}_2", "embedding": [0.0, 1.0]},
        answer_1=truth[0].value,
        answer_2=truth[1].value,
    )


def make_result(pair_id, finals, adjudicated=False):
    def decision(vote):
        return Decision(label=vote, branch=Branch.MARGIN_WIN, aggregate=AggregateState())

    return PairResult(
        pair_id=pair_id,
        decision_1=decision(finals[0]),
        decision_2=decision(finals[1]),
        final_1=finals[0],
        final_2=finals[1],
        adjudicated=adjudicated,
    )


def test_two_pair_example():
    dataset = [make_pair("p1", (A, B)), make_pair("p2", (A, B))]
    results = [make_result("p1", (A, B)), make_result("p2", (A, A))]
    report = compute_metrics(results, dataset)
    assert report.set_accuracy == 0.5
    assert report.individual_accuracy == 0.75
    assert report.confusion_rate == 0.5
    assert report.abstention_rate == 0.0
    assert report.coverage == 1.0


def test_abstain_example():
    report = compute_metrics([make_result("p1", (X, B))], [make_pair("p1", (A, B))])
    assert report.set_accuracy == 0.0
    assert report.individual_accuracy == 0.5
    assert report.abstention_rate == 0.5
    assert report.coverage == 0.5
    assert report.conditional_accuracy == 1.0
    assert report.confusion_rate == 0.0


def test_both_abstain_is_not_confusion():
    report = compute_metrics([make_result("p1", (X, X))], [make_pair("p1", (A, B))])
    assert report.confusion_rate == 0.0
    assert report.coverage == 0.0
    assert report.conditional_accuracy == 0.0


def test_per_category_and_counts():
    dataset = [make_pair("p1", (A, B), "lung"), make_pair("p2", (B, A), "brain"), make_pair("p3", (A, B), "lung")]
    results = [
        make_result("p3", (A, A), adjudicated=True),
        make_result("p1", (A, B)),
        make_result("p2", (B, A)),
    ]
    report = compute_metrics(results, dataset, config={"p": 50}, provenance={"bank": "abc"})
    assert list(report.per_category) == ["brain", "lung"]
    assert report.per_category["brain"].set_accuracy == 1.0
    assert report.per_category["lung"].set_accuracy == 0.5
    assert report.per_category["lung"].individual_accuracy == 0.75
    assert report.per_category["lung"].pairs == 2
    assert report.counts.pairs == 3 and report.counts.images == 6
    assert report.counts.adjudicated_pairs == 1
    assert report.config == {"p": 50} and report.provenance == {"bank": "abc"}


def test_coverage_mismatch_is_rejected():
    dataset = [make_pair(f"p{i}", (A, B)) for i in range(3)]
    with pytest.raises(ValidationError, match="cover 2 of 3"):
        compute_metrics([make_result("p0", (A, B)), make_result("p1", (A, B))], dataset)
    with pytest.raises(ValidationError, match="more than one"):
        compute_metrics([make_result("p0", (A, B))] * 2 + [make_result("p1", (A, B))], dataset)
    with pytest.raises(ValidationError, match="absent"):
        compute_metrics([make_result(f"p{i}", (A, B)) for i in range(4)], dataset)
    with pytest.raises(ValidationError, match="empty"):
        compute_metrics([], [])


def _random_rows(rng, n):
    rows = []
    for _ in range(n):
        truth = rng.choice([(A, B), (B, A), (A, A), (B, B)])
        finals = (rng.choice([A, B, X]), rng.choice([A, B, X]))
        rows.append((*finals, *truth))
    return rows


def test_metric_identities_hold_exactly():
    rng = random.Random(3)
    for _ in range(2_000):
        counts = count_outcomes(_random_rows(rng, rng.randint(1, 12)))
        exact = exact_metrics(counts)
        assert exact["coverage"] + exact["abstention_rate"] == 1
        answered_correct = Fraction(counts.correct_images, counts.images)
        assert exact["conditional_accuracy"] * exact["coverage"] == answered_correct
        assert exact["set_accuracy"] <= exact["individual_accuracy"]
        assert all(0 <= value <= 1 for value in exact.values())


def test_metrics_invariant_under_reorder_and_swap():
    rng = random.Random(9)
    for _ in range(200):
        rows = _random_rows(rng, rng.randint(1, 10))
        base = exact_metrics(count_outcomes(rows))
        shuffled = rows[:]
        rng.shuffle(shuffled)
        swapped = [(f2, f1, t2, t1) for f1, f2, t1, t2 in shuffled]
        assert exact_metrics(count_outcomes(swapped)) == base
