"""JSON-Lines response cache keyed by query, reference and rendered-prompt digest."""
from __future__ import annotations

import asyncio
import hashlib
import json
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, Optional

from pydantic import BaseModel, Field

from utils.logger import get_logger
from utils.validators import iter_jsonl

logger = get_logger(__name__)

# Pseudo reference ids for the text-only and pair-level adjudicator replies.
AGGREGATE_REFERENCE = "__aggregate__"
PAIR_REFERENCE = "__pair__"


def prompt_digest(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


def cache_key(query_id: str, reference_id: str, prompt_sha256: str) -> str:
    return hashlib.sha256(f"{query_id}|{reference_id}|{prompt_sha256}".encode("utf-8")).hexdigest()


class CacheRecord(BaseModel):
    key: str
    query_id: str
    reference_id: str
    prompt_sha256: str
    raw_response: str
    created_at: str = Field(default_factory=lambda: datetime.now(timezone.utc).isoformat(timespec="seconds"))


class ResponseCache:
    """Raw engine replies, loaded from and appended to one JSON-Lines file.

    With ``path=None`` the cache lives in memory only. Appends go through a
    single asyncio lock so concurrent comparisons never interleave lines.
    """

    def __init__(self, path: Optional[str | Path] = None) -> None:
        self.path = Path(path) if path is not None else None
        self._records: Dict[str, CacheRecord] = {}
        self._lock = asyncio.Lock()
        self.hits = 0
        self.misses = 0
        if self.path is not None and self.path.exists():
            for _, record in iter_jsonl(self.path, CacheRecord):
                self._records[record.key] = record
            logger.info("Loaded %d cached responses from %s", len(self._records), self.path)

    def __len__(self) -> int:
        return len(self._records)

    def __contains__(self, key: str) -> bool:
        return key in self._records

    def get(self, query_id: str, reference_id: str, prompt_sha256: str) -> Optional[str]:
        record = self._records.get(cache_key(query_id, reference_id, prompt_sha256))
        if record is None:
            self.misses += 1
            return None
        self.hits += 1
        return record.raw_response

    async def put(self, query_id: str, reference_id: str, prompt_sha256: str, raw_response: str) -> CacheRecord:
        key = cache_key(query_id, reference_id, prompt_sha256)
        record = CacheRecord(
            key=key,
            query_id=query_id,
            reference_id=reference_id,
            prompt_sha256=prompt_sha256,
            raw_response=raw_response,
        )
        async with self._lock:
            if key in self._records:
                return self._records[key]
            self._records[key] = record
            if self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with self.path.open("a", encoding="utf-8") as handle:
                    handle.write(json.dumps(record.model_dump(), ensure_ascii=False) + "\n")
        return record

    def stats(self) -> Dict[str, int]:
        return {"entries": len(self._records), "hits": self.hits, "misses": self.misses}
