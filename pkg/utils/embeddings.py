"""Embedding matrix I/O and vector validation."""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np

from utils.exceptions import ValidationError

MAGIC = b"DTBANK01"
_HEADER_BYTES = len(MAGIC) + 8


def as_embedding(values: Sequence[float] | np.ndarray, *, label: str = "embedding") -> np.ndarray:
    """Return *values* as a 1-D float32 vector, rejecting NaN/Inf and zero norm."""
    vector = np.asarray(values, dtype=np.float32)
    if vector.ndim != 1 or vector.size == 0:
        raise ValidationError(f"{label}: expected a non-empty 1-D vector, got shape {vector.shape}")
    if not np.all(np.isfinite(vector)):
        raise ValidationError(f"{label}: contains NaN or Inf components")
    if not np.any(vector):
        raise ValidationError(f"{label}: zero-norm embedding")
    return vector


def read_matrix(path: str | Path) -> np.ndarray:
    """Read a DTBANK01 file: magic, uint32 count, uint32 dim, count*dim little-endian float32."""
    path = Path(path)
    data = path.read_bytes()
    if len(data) < _HEADER_BYTES or data[: len(MAGIC)] != MAGIC:
        raise ValidationError("not a DTBANK01 embedding matrix", source=str(path))
    count, dim = (int(v) for v in np.frombuffer(data, dtype="<u4", count=2, offset=len(MAGIC)))
    expected = _HEADER_BYTES + count * dim * 4
    if len(data) != expected:
        raise ValidationError(
            f"header declares {count}x{dim} floats ({expected} bytes) but file has {len(data)} bytes",
            source=str(path),
        )
    matrix = np.frombuffer(data, dtype="<f4", count=count * dim, offset=_HEADER_BYTES)
    return matrix.reshape(count, dim).astype(np.float32)


def write_matrix(path: str | Path, matrix: np.ndarray) -> Path:
    """Write *matrix* (count x dim) in DTBANK01 layout."""
    path = Path(path)
    matrix = np.ascontiguousarray(matrix, dtype="<f4")
    if matrix.ndim != 2:
        raise ValidationError(f"expected a 2-D matrix, got shape {matrix.shape}", source=str(path))
    path.parent.mkdir(parents=True, exist_ok=True)
    header = np.asarray(matrix.shape, dtype="<u4").tobytes()
    path.write_bytes(MAGIC + header + matrix.tobytes())
    return path
