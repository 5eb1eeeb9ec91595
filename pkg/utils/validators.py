"""Line-numbered JSON-Lines reading with pydantic validation."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Iterator, Tuple, Type, TypeVar

from pydantic import BaseModel
from pydantic import ValidationError as PydanticValidationError

from utils.exceptions import ValidationError

ModelT = TypeVar("ModelT", bound=BaseModel)


def file_digest(path: str | Path) -> str:
    """Return the sha256 hex digest of the file at *path*."""
    digest = hashlib.sha256()
    with Path(path).open("rb") as handle:
        for block in iter(lambda: handle.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def _describe(exc: PydanticValidationError) -> str:
    parts = []
    for error in exc.errors():
        location = ".".join(str(p) for p in error.get("loc", ()))
        parts.append(f"{location}: {error.get('msg')}" if location else str(error.get("msg")))
    return "; ".join(parts)


def iter_jsonl(path: str | Path, model: Type[ModelT]) -> Iterator[Tuple[int, ModelT]]:
    """Yield (line_number, record) for each non-blank line, validated against *model*."""
    path = Path(path)
    if not path.exists():
        raise ValidationError("file does not exist", source=str(path))
    with path.open("r", encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                payload = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"malformed JSON: {exc.msg}", line=line_number, source=str(path)) from exc
            if not isinstance(payload, dict):
                raise ValidationError("record must be a JSON object", line=line_number, source=str(path))
            try:
                yield line_number, model.model_validate(payload)
            except PydanticValidationError as exc:
                raise ValidationError(_describe(exc), line=line_number, source=str(path)) from exc
