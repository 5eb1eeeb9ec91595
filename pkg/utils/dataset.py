"""Confusion-pair dataset loading and run-result I/O."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Dict, Iterable, List, Optional

import numpy as np

from models.schemas import ConfusionPair, ImageRecord
from models.state import PairResult
from utils.embeddings import as_embedding, read_matrix
from utils.exceptions import ValidationError
from utils.logger import get_logger
from utils.validators import iter_jsonl

logger = get_logger(__name__)


def _resolve_image(image: ImageRecord, matrix: Optional[np.ndarray], *, line: int, source: str) -> ImageRecord:
    if image.embedding is not None:
        raw = image.embedding
    else:
        if matrix is None:
            raise ValidationError(f"image {image.id!r} uses a row reference but no embeddings file", line=line, source=source)
        if image.row >= matrix.shape[0]:
            raise ValidationError(
                f"image {image.id!r}: row {image.row} out of range for matrix with {matrix.shape[0]} rows",
                line=line,
                source=source,
            )
        raw = matrix[image.row]
    try:
        vector = as_embedding(raw, label=f"image {image.id!r}")
    except ValidationError as exc:
        raise ValidationError(str(exc), line=line, source=source) from exc
    return image.model_copy(update={"embedding": vector.tolist(), "row": None})


def load_dataset(path: str | Path, embeddings_path: Optional[str | Path] = None) -> List[ConfusionPair]:
    """Read pairs in file order, resolving row references against *embeddings_path*."""
    source = str(path)
    matrix = read_matrix(embeddings_path) if embeddings_path is not None else None
    pairs: List[ConfusionPair] = []
    seen: Dict[str, int] = {}
    for line, pair in iter_jsonl(path, ConfusionPair):
        if pair.pair_id in seen:
            raise ValidationError(
                f"duplicate pair_id {pair.pair_id!r} on lines {seen[pair.pair_id]} and {line}",
                line=line,
                source=source,
            )
        seen[pair.pair_id] = line
        pairs.append(
            pair.model_copy(
                update={
                    "image_1": _resolve_image(pair.image_1, matrix, line=line, source=source),
                    "image_2": _resolve_image(pair.image_2, matrix, line=line, source=source),
                }
            )
        )
    logger.info("Loaded %d confusion pairs from %s", len(pairs), source)
    return pairs


def write_results(path: str | Path, results: Iterable[PairResult]) -> Path:
    """One PairResult per line, trace excluded."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        for result in results:
            handle.write(result.model_dump_json(exclude={"trace"}) + "\n")
    return path


def write_traces(path: str | Path, results: Iterable[PairResult]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        for result in results:
            record = {"pair_id": result.pair_id, "trace_digest": result.trace_digest, "events": result.trace}
            handle.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")
    return path


def load_results(path: str | Path) -> List[PairResult]:
    return [result for _, result in iter_jsonl(path, PairResult)]
