"""Shared fixtures: in-memory banks, query contexts and synthetic run files."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Union

import numpy as np
import pytest

from models.schemas import BankEntry, QueryContext
from services.comparison_engine import ComparisonEngine, EngineRequest
from services.reference_bank import ReferenceBank
from utils.exceptions import EngineError

MODALITY_CAPTIONS = (
    "axial ct of the chest showing pleural effusion",
    "ct abdomen with contrast, liver lesion",
    "mri brain flair sequence",
    "chest x-ray with consolidation",
    "ultrasound of the gallbladder",
    "",
)


def make_bank(
    vectors: Sequence[Sequence[float]],
    *,
    ids: Optional[Sequence[str]] = None,
    doc_ids: Optional[Sequence[str]] = None,
    captions: Optional[Sequence[str]] = None,
) -> ReferenceBank:
    ids = list(ids) if ids is not None else [f"r{i:04d}" for i in range(len(vectors))]
    entries = [
        BankEntry(
            id=entry_id,
            doc_id=doc_ids[i] if doc_ids is not None else entry_id,
            caption=captions[i] if captions is not None else "",
            modality=None,
            embedding=np.asarray(vectors[i], dtype=np.float32),
        )
        for i, entry_id in enumerate(ids)
    ]
    return ReferenceBank(entries)


def make_ctx(
    embedding: Sequence[float],
    *,
    query_id: str = "q1",
    question: str = "Is there a pleural effusion in this chest CT?",
    option_a: str = "yes",
    option_b: str = "no",
) -> QueryContext:
    return QueryContext(
        query_id=query_id,
        query_embedding=np.asarray(embedding, dtype=np.float32),
        question_text=question,
        option_a=option_a,
        option_b=option_b,
    )


Reply = Union[str, Callable[[EngineRequest], str]]


class ScriptedEngine(ComparisonEngine):
    """Engine returning a fixed reply (or a reply computed per request); records every request."""

    name = "scripted"

    def __init__(self, reply: Reply = "", *, fail: bool = False) -> None:
        super().__init__()
        self.reply = reply
        self.fail = fail
        self.requests: List[EngineRequest] = []

    async def _complete(self, request: EngineRequest) -> str:
        self.requests.append(request)
        if self.fail:
            raise EngineError("HTTP 503: service unavailable", status=503)
        return self.reply(request) if callable(self.reply) else self.reply


@dataclass
class SyntheticRun:
    manifest: Path
    dataset: Path
    pairs: int
    root: Path


def write_jsonl(path: Path, records: Sequence[dict]) -> Path:
    with path.open("w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record) + "\n")
    return path


def write_synthetic_run(
    root: Path,
    *,
    pairs: int = 16,
    bank_size: int = 80,
    dim: int = 8,
    seed: int = 0,
) -> SyntheticRun:
    """Random bank with mixed-modality captions plus a dataset of CT/MRI confusion pairs."""
    rng = np.random.default_rng(seed)
    root.mkdir(parents=True, exist_ok=True)
    bank_records = []
    for i in range(bank_size):
        bank_records.append(
            {
                "id": f"ref{i:03d}",
                "doc_id": f"doc{i // 3:03d}",
                "caption": MODALITY_CAPTIONS[i % len(MODALITY_CAPTIONS)],
                "modality": None,
                "embedding": rng.normal(size=dim).round(6).tolist(),
            }
        )
    manifest = write_jsonl(root / "manifest.jsonl", bank_records)

    dataset_records = []
    for k in range(pairs):
        answers = ("A", "B") if k % 2 == 0 else ("B", "A")
        modality_word = "CT" if k % 3 else "MRI"
        dataset_records.append(
            {
                "pair_id": f"pair{k:02d}",
                "category": "lung" if k % 2 == 0 else "brain",
                "question": f"Is there a pleural effusion in this {modality_word} image?",
                "option_a": "yes",
                "option_b": "no",
                "image_1": {"id": f"pair{k:02d}_1", "embedding": rng.normal(size=dim).round(6).tolist()},
                "image_2": {"id": f"pair{k:02d}_2", "embedding": rng.normal(size=dim).round(6).tolist()},
                "answer_1": answers[0],
                "answer_2": answers[1],
            }
        )
    dataset = write_jsonl(root / "dataset.jsonl", dataset_records)
    return SyntheticRun(manifest=manifest, dataset=dataset, pairs=pairs, root=root)


@pytest.fixture
def bank_factory() -> Callable[..., ReferenceBank]:
    return make_bank


@pytest.fixture
def ctx_factory() -> Callable[..., QueryContext]:
    return make_ctx


@pytest.fixture
def synthetic_run(tmp_path: Path) -> SyntheticRun:
    return write_synthetic_run(tmp_path / "data")


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


def unit_rows(rng: np.random.Generator, count: int, dim: int) -> List[List[float]]:
    rows = rng.normal(size=(count, dim))
    return rows.tolist()
