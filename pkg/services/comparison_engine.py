"""Comparison engine interface, bounded retry and the replay guard used by sweeps."""
from __future__ import annotations

import asyncio
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from typing import Any, Awaitable, Callable, Dict, Optional, Tuple

from config.constants import RETRY_ATTEMPTS, RETRY_BACKOFF_SECONDS
from models.schemas import Role
from utils.exceptions import EngineError, ReplayError
from utils.logger import get_logger

logger = get_logger(__name__)


class RequestKind(str, Enum):
    PAIRWISE = "pairwise"
    AGGREGATE = "aggregate"
    PAIR = "pair"


@dataclass(frozen=True)
class EngineRequest:
    """One prompt plus the images it refers to.

    ``image_ids`` and ``image_paths`` are aligned: (query, reference) for
    pairwise requests, (image 1, image 2) for pair requests, empty for the
    text-only aggregate request.
    """

    kind: RequestKind
    prompt: str
    query_id: str
    reference_id: str = ""
    role: Optional[Role] = None
    image_ids: Tuple[str, ...] = ()
    image_paths: Tuple[Optional[str], ...] = ()


class ComparisonEngine(ABC):
    """Something that turns an :class:`EngineRequest` into raw reply text."""

    name = "engine"

    def __init__(self) -> None:
        self.calls = 0

    async def complete(self, request: EngineRequest) -> str:
        self.calls += 1
        return await self._complete(request)

    @abstractmethod
    async def _complete(self, request: EngineRequest) -> str:
        """Return the raw reply; raise EngineError on transport failure."""

    async def close(self) -> None:
        return None

    def get_status(self) -> Dict[str, Any]:
        return {"name": self.name, "calls": self.calls}


async def complete_with_retry(
    engine: ComparisonEngine,
    request: EngineRequest,
    *,
    attempts: int = RETRY_ATTEMPTS,
    backoff: float = RETRY_BACKOFF_SECONDS,
    sleep: Callable[[float], Awaitable[None]] = asyncio.sleep,
) -> str:
    """Call *engine* up to *attempts* times, doubling the wait after each EngineError."""
    delay = backoff
    last: Optional[EngineError] = None
    for attempt in range(1, attempts + 1):
        try:
            return await engine.complete(request)
        except EngineError as exc:
            last = exc
            logger.warning(
                "%s request for %s/%s failed (attempt %d/%d): %s",
                request.kind.value,
                request.query_id,
                request.reference_id or "-",
                attempt,
                attempts,
                exc,
            )
            if attempt < attempts:
                await sleep(delay)
                delay *= 2
    raise EngineError(f"gave up after {attempts} attempts: {last}", status=last.status if last else None)


class ReplayEngine(ComparisonEngine):
    """Refuses pairwise requests so a replay can only use cached comparisons.

    Adjudication requests are forwarded to *fallback* when one is given.
    """

    name = "replay"

    def __init__(self, fallback: Optional[ComparisonEngine] = None) -> None:
        super().__init__()
        self.fallback = fallback

    async def _complete(self, request: EngineRequest) -> str:
        if request.kind is RequestKind.PAIRWISE or self.fallback is None:
            raise ReplayError(
                f"no cached {request.kind.value} response for query {request.query_id!r}"
                f" / reference {request.reference_id or '-'!r}"
            )
        return await self.fallback.complete(request)

    async def close(self) -> None:
        if self.fallback is not None:
            await self.fallback.close()
