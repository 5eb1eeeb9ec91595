"""Seeded mock engine answering all three prompt kinds from a ground-truth table."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Dict, Iterable, Mapping

import numpy as np

from config.constants import DEFAULT_MOCK_RELIABILITY
from models.responses import EvidenceRecord
from models.schemas import ConfusionPair, MockConfig, Role, Vote
from services.comparison_engine import ComparisonEngine, EngineRequest, RequestKind
from utils.caching import AGGREGATE_REFERENCE, PAIR_REFERENCE
from utils.exceptions import FixtureError
from utils.parsers import format_comparison_response, format_final_answer, format_pair_answers


@dataclass(frozen=True)
class MockFixture:
    """Correct option per query image plus the mock's reliability settings."""

    labels: Mapping[str, Vote]
    config: MockConfig = field(default_factory=MockConfig)

    @classmethod
    def from_pairs(cls, pairs: Iterable[ConfusionPair], config: MockConfig | None = None) -> "MockFixture":
        labels: Dict[str, Vote] = {}
        for pair in pairs:
            for index in (1, 2):
                image_id, truth = pair.image(index).id, pair.truth(index)
                if labels.setdefault(image_id, truth) is not truth:
                    raise FixtureError(
                        f"image {image_id!r} has conflicting answers across pairs (pair {pair.pair_id!r} says {truth.value})"
                    )
        return cls(labels=labels, config=config or MockConfig())

    def label(self, query_id: str) -> Vote:
        try:
            return self.labels[query_id]
        except KeyError:
            raise FixtureError(f"mock fixture has no label for query {query_id!r}") from None

    def reliability(self, role: Role | None) -> float:
        if role is None:
            return self.config.adjudicator_reliability
        return self.config.reliability.get(role, DEFAULT_MOCK_RELIABILITY)


def keyed_generator(seed: int, query_id: str, reference_id: str) -> np.random.Generator:
    """Counter-based generator keyed by (seed, query_id, reference_id)."""
    digest = hashlib.sha256(f"{seed}|{query_id}|{reference_id}".encode("utf-8")).digest()
    return np.random.Generator(np.random.Philox(key=int.from_bytes(digest[:16], "little")))


def mock_vote(fixture: MockFixture, seed: int, query_id: str, reference_id: str, role: Role | None) -> tuple[Vote, int]:
    """(vote, confidence) drawn for one comparison; the first draw decides correctness."""
    truth = fixture.label(query_id)
    rng = keyed_generator(seed, query_id, reference_id)
    correct = rng.random() < fixture.reliability(role)
    lo, hi = fixture.config.confidence_range
    confidence = int(rng.integers(lo, hi, endpoint=True))
    return (truth if correct else truth.other()), confidence


def mock_compare(fixture: MockFixture, seed: int, query_id: str, reference_id: str, role: Role) -> str:
    """Syntactically valid pairwise reply drawn deterministically for (seed, query, reference)."""
    vote, confidence = mock_vote(fixture, seed, query_id, reference_id, role)
    evidence = EvidenceRecord(
        modality_anatomy="synthetic modality, synthetic anatomy",
        findings=[f"finding {k} in query {query_id}" for k in (1, 2, 3)],
        differences=[
            f"contrast differs from reference {reference_id}",
            f"{role.value.replace('_', ' ')} comparison shows a distinct pattern",
        ],
        key_evidence=f"region pattern supporting option {vote.value}",
    )
    return format_comparison_response(vote, confidence, evidence)


class MockEngine(ComparisonEngine):
    name = "mock"

    def __init__(self, fixture: MockFixture, seed: int = 0) -> None:
        super().__init__()
        self.fixture = fixture
        self.seed = seed

    def _adjudicated(self, query_id: str, reference_id: str) -> Vote:
        if self.fixture.config.adjudicator == "abstain":
            return Vote.ABSTAIN
        vote, _ = mock_vote(self.fixture, self.seed, query_id, reference_id, None)
        return vote

    async def _complete(self, request: EngineRequest) -> str:
        if request.kind is RequestKind.PAIRWISE:
            role = request.role or Role.ANCHOR
            return mock_compare(self.fixture, self.seed, request.query_id, request.reference_id, role)
        if request.kind is RequestKind.AGGREGATE:
            return format_final_answer(self._adjudicated(request.query_id, AGGREGATE_REFERENCE))
        first, second = request.image_ids
        return format_pair_answers(self._adjudicated(first, PAIR_REFERENCE), self._adjudicated(second, PAIR_REFERENCE))
