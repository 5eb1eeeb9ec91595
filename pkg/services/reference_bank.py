"""Reference bank: ingestion, cosine similarity, near-duplicate suppression and ranking."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterator, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from models.schemas import BankEntry, ManifestRecord
from utils.embeddings import as_embedding, read_matrix, write_matrix
from utils.exceptions import ValidationError
from utils.logger import get_logger
from utils.validators import iter_jsonl

logger = get_logger(__name__)

BANK_MANIFEST_NAME = "bank.jsonl"
BANK_MATRIX_NAME = "bank.dtbank"
DEDUP_LOG_NAME = "dedup_log.jsonl"


def _row_norms(rows: np.ndarray) -> np.ndarray:
    return np.sqrt(np.einsum("ij,ij->i", rows, rows))


def _cosine_against(rows: np.ndarray, row_norms: np.ndarray, vector: np.ndarray, vector_norm: float) -> np.ndarray:
    """Cosine of each row of *rows* against *vector*, in float64, clamped to [-1, 1]."""
    dots = np.einsum("ij,j->i", rows, vector)
    return np.clip(dots / (row_norms * vector_norm), -1.0, 1.0)


def _as_float64(vector: Sequence[float] | np.ndarray) -> Tuple[np.ndarray, float]:
    v64 = np.asarray(vector, dtype=np.float32).astype(np.float64)
    if v64.ndim != 1:
        raise ValidationError(f"expected a 1-D embedding, got shape {v64.shape}")
    norm = float(_row_norms(v64[None, :])[0])
    return v64, norm


def cosine_similarity(a: Sequence[float] | np.ndarray, b: Sequence[float] | np.ndarray) -> float:
    """Cosine similarity of two non-zero embeddings of equal dimension."""
    a64, a_norm = _as_float64(a)
    b64, b_norm = _as_float64(b)
    if a64.shape != b64.shape:
        raise ValidationError(f"dimension mismatch: {a64.shape[0]} vs {b64.shape[0]}")
    if a_norm == 0.0 or b_norm == 0.0:
        raise ValidationError("cosine similarity is undefined for a zero vector")
    return float(_cosine_against(a64[None, :], np.array([a_norm]), b64, b_norm)[0])


def normalize_modality(value: Optional[str]) -> Optional[str]:
    """Upper-case tag with spaces, hyphens and underscores removed; None when blank."""
    if value is None:
        return None
    tag = "".join(ch for ch in value.strip().upper() if ch not in " -_")
    return tag or None


@dataclass(frozen=True)
class BankProvenance:
    manifest_path: str
    digest: str


class DropRecord(NamedTuple):
    dropped_id: str
    against_id: str
    similarity: float


@dataclass(frozen=True)
class RankedCandidate:
    entry: BankEntry
    similarity: float
    rank: int
    index: int


class ReferenceBank:
    """Immutable collection of bank entries sharing one embedding dimension."""

    def __init__(
        self,
        entries: Sequence[BankEntry],
        *,
        provenance: Optional[BankProvenance] = None,
        _matrix64: Optional[np.ndarray] = None,
        _norms: Optional[np.ndarray] = None,
    ) -> None:
        self.entries: Tuple[BankEntry, ...] = tuple(entries)
        self.provenance = provenance or BankProvenance(manifest_path="<memory>", digest="")
        if _matrix64 is None:
            if self.entries:
                dims = {e.embedding.shape[0] for e in self.entries}
                if len(dims) != 1:
                    raise ValidationError(f"bank mixes embedding dimensions {sorted(dims)}")
                _matrix64 = np.vstack([e.embedding for e in self.entries]).astype(np.float64)
            else:
                _matrix64 = np.zeros((0, 0), dtype=np.float64)
            _norms = _row_norms(_matrix64)
        self._matrix64 = _matrix64
        self._norms = _norms if _norms is not None else _row_norms(_matrix64)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[BankEntry]:
        return iter(self.entries)

    @property
    def dimension(self) -> int:
        return int(self._matrix64.shape[1]) if self.entries else 0

    @property
    def ids(self) -> List[str]:
        return [e.id for e in self.entries]

    def subset(self, indices: Sequence[int]) -> "ReferenceBank":
        """Bank restricted to *indices*, in the given order."""
        idx = np.asarray(list(indices), dtype=np.intp)
        return ReferenceBank(
            [self.entries[i] for i in idx],
            provenance=self.provenance,
            _matrix64=self._matrix64[idx],
            _norms=self._norms[idx],
        )

    def similarities(self, query: Sequence[float] | np.ndarray) -> np.ndarray:
        """Cosine similarity of every entry against *query*, in bank order."""
        q64, q_norm = _as_float64(query)
        if not self.entries:
            return np.zeros(0, dtype=np.float64)
        if q64.shape[0] != self.dimension:
            raise ValidationError(f"query dimension {q64.shape[0]} does not match bank dimension {self.dimension}")
        if q_norm == 0.0:
            raise ValidationError("query embedding has zero norm")
        return _cosine_against(self._matrix64, self._norms, q64, q_norm)


def load_bank(manifest_path: str | Path, embeddings_path: Optional[str | Path] = None) -> ReferenceBank:
    """Load a JSON-Lines manifest (inline embeddings or row references) in manifest order."""
    manifest_path = Path(manifest_path)
    matrix: Optional[np.ndarray] = None
    if embeddings_path is not None:
        matrix = read_matrix(embeddings_path)

    source = str(manifest_path)
    entries: List[BankEntry] = []
    first_line: Dict[str, int] = {}
    mode: Optional[str] = None
    dimension: Optional[int] = None

    for line, record in iter_jsonl(manifest_path, ManifestRecord):
        record_mode = "inline" if record.embedding is not None else "row"
        if mode is None:
            mode = record_mode
        elif mode != record_mode:
            raise ValidationError(
                f"manifest mixes inline embeddings and row references (record {record.id!r})",
                line=line,
                source=source,
            )
        if record.id in first_line:
            raise ValidationError(
                f"duplicate id {record.id!r} on lines {first_line[record.id]} and {line}",
                line=line,
                source=source,
            )
        first_line[record.id] = line

        if record.embedding is not None:
            raw = record.embedding
        else:
            if matrix is None:
                raise ValidationError("row reference given but no embeddings file", line=line, source=source)
            if record.row >= matrix.shape[0]:
                raise ValidationError(
                    f"row {record.row} out of range for matrix with {matrix.shape[0]} rows",
                    line=line,
                    source=source,
                )
            raw = matrix[record.row]
        try:
            vector = as_embedding(raw, label=f"record {record.id!r}")
        except ValidationError as exc:
            raise ValidationError(str(exc), line=line, source=source) from exc

        if dimension is None:
            dimension = vector.shape[0]
        elif vector.shape[0] != dimension:
            raise ValidationError(
                f"record {record.id!r} has dimension {vector.shape[0]}, expected {dimension}",
                line=line,
                source=source,
            )

        doc_id = (record.doc_id or "").strip() or record.id
        entries.append(
            BankEntry(
                id=record.id,
                doc_id=doc_id,
                caption=record.caption or "",
                modality=normalize_modality(record.modality),
                embedding=vector,
                path=record.path,
            )
        )

    if not entries:
        raise ValidationError("manifest contains no records", source=source)

    digest = hashlib.sha256(manifest_path.read_bytes())
    if embeddings_path is not None:
        digest.update(Path(embeddings_path).read_bytes())
    logger.info("Loaded %d bank entries (D=%d) from %s", len(entries), dimension, manifest_path)
    return ReferenceBank(entries, provenance=BankProvenance(manifest_path=source, digest=digest.hexdigest()))


def deduplicate(bank: ReferenceBank, tau_dup: float) -> Tuple[ReferenceBank, List[DropRecord]]:
    """Greedy single pass in bank order: keep an entry iff every retained entry is within tau_dup."""
    if not 0.0 < tau_dup <= 1.0:
        raise ValidationError(f"tau_dup must lie in (0, 1], got {tau_dup}")
    n = len(bank)
    retained: List[int] = []
    dropped: List[DropRecord] = []
    matrix = bank._matrix64
    norms = bank._norms
    for i in range(n):
        if retained:
            kept = np.asarray(retained, dtype=np.intp)
            sims = _cosine_against(matrix[kept], norms[kept], matrix[i], float(norms[i]))
            best = int(np.argmax(sims))
            if sims[best] > tau_dup:
                dropped.append(DropRecord(bank.entries[i].id, bank.entries[kept[best]].id, float(sims[best])))
                continue
        retained.append(i)
    if dropped:
        logger.info("Near-duplicate suppression dropped %d of %d entries (tau=%.4f)", len(dropped), n, tau_dup)
    return bank.subset(retained), dropped


def rank_by_similarity(bank: ReferenceBank, query: Sequence[float] | np.ndarray) -> List[RankedCandidate]:
    """Rank every entry by descending similarity; ties go to the smaller id. Rank 1 is most similar."""
    if not len(bank):
        raise ValidationError("cannot rank an empty bank")
    sims = bank.similarities(query)
    ids = bank.ids
    order = sorted(range(len(bank)), key=lambda i: (-sims[i], ids[i]))
    return [
        RankedCandidate(entry=bank.entries[i], similarity=float(sims[i]), rank=rank, index=i)
        for rank, i in enumerate(order, start=1)
    ]


def save_bank(bank: ReferenceBank, out_dir: str | Path, dropped: Sequence[DropRecord] = ()) -> Dict[str, Path]:
    """Write *bank* as a row-reference manifest, a DTBANK01 matrix and the drop log."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    matrix_path = write_matrix(
        out_dir / BANK_MATRIX_NAME,
        np.vstack([e.embedding for e in bank.entries]) if len(bank) else np.zeros((0, 0), dtype=np.float32),
    )
    manifest_path = out_dir / BANK_MANIFEST_NAME
    with manifest_path.open("w", encoding="utf-8") as handle:
        for row, entry in enumerate(bank.entries):
            record = {
                "id": entry.id,
                "doc_id": entry.doc_id,
                "caption": entry.caption,
                "modality": entry.modality,
                "row": row,
            }
            if entry.path is not None:
                record["path"] = entry.path
            handle.write(json.dumps(record, ensure_ascii=False) + "\n")
    log_path = out_dir / DEDUP_LOG_NAME
    with log_path.open("w", encoding="utf-8") as handle:
        for drop in dropped:
            handle.write(json.dumps(drop._asdict()) + "\n")
    return {"manifest": manifest_path, "embeddings": matrix_path, "dedup_log": log_path}
