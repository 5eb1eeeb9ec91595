"""OpenAI-compatible chat-completions client for vision-language comparisons."""
from __future__ import annotations

import base64
import mimetypes
from pathlib import Path
from typing import Any, Dict, List, Optional

import aiohttp

from models.schemas import HttpEngineConfig
from services.comparison_engine import ComparisonEngine, EngineRequest
from utils.config_loader import get_api_token
from utils.exceptions import EngineError, ValidationError
from utils.logger import get_logger

logger = get_logger(__name__)


def _to_text(content: Any) -> str:
    if isinstance(content, str):
        return content
    if isinstance(content, list):
        parts: List[str] = []
        for chunk in content:
            if isinstance(chunk, dict):
                value = chunk.get("text") or chunk.get("content")
                if value:
                    parts.append(str(value))
            elif chunk:
                parts.append(str(chunk))
        return "\n".join(parts)
    return str(content) if content else ""


class HttpEngine(ComparisonEngine):
    """Sends the rendered prompt plus base64-inlined images to a chat-completions endpoint."""

    name = "http"

    def __init__(self, config: HttpEngineConfig | None = None, *, api_key: Optional[str] = None) -> None:
        super().__init__()
        self.config = config or HttpEngineConfig()
        self.api_key = api_key or get_api_token(self.config.token_env)
        if not self.api_key:
            raise ValidationError(f"{self.config.token_env} not found in environment")
        self._headers = {
            "Authorization": f"Bearer {self.api_key}",
            "Content-Type": "application/json",
        }
        self._session: Optional[aiohttp.ClientSession] = None

    def _resolve(self, path: Optional[str], image_id: str) -> Path:
        if not path:
            raise EngineError(f"no image path for {image_id!r}")
        resolved = Path(path)
        if not resolved.is_absolute() and self.config.image_root:
            resolved = Path(self.config.image_root) / resolved
        if not resolved.exists():
            raise EngineError(f"image for {image_id!r} not found at {resolved}")
        return resolved

    def _image_part(self, path: Path) -> Dict[str, Any]:
        mime = mimetypes.guess_type(path.name)[0] or "image/png"
        encoded = base64.b64encode(path.read_bytes()).decode("ascii")
        return {"type": "image_url", "image_url": {"url": f"data:{mime};base64,{encoded}"}}

    def build_payload(self, request: EngineRequest) -> Dict[str, Any]:
        content: List[Dict[str, Any]] = [{"type": "text", "text": request.prompt}]
        for image_id, path in zip(request.image_ids, request.image_paths):
            content.append(self._image_part(self._resolve(path, image_id)))
        return {
            "model": self.config.model,
            "messages": [{"role": "user", "content": content}],
            "max_tokens": self.config.max_tokens,
            "temperature": self.config.temperature,
        }

    async def _get_session(self) -> aiohttp.ClientSession:
        if self._session is None or self._session.closed:
            self._session = aiohttp.ClientSession(
                headers=self._headers,
                timeout=aiohttp.ClientTimeout(total=self.config.timeout),
            )
        return self._session

    async def _complete(self, request: EngineRequest) -> str:
        payload = self.build_payload(request)
        session = await self._get_session()
        try:
            async with session.post(self.config.endpoint, json=payload) as response:
                if response.status >= 400:
                    body = (await response.text())[:500]
                    raise EngineError(f"API error {response.status}: {body}", status=response.status)
                data = await response.json(content_type=None)
        except aiohttp.ClientError as exc:
            raise EngineError(f"Connection error: {exc}") from exc
        except TimeoutError as exc:
            raise EngineError(f"request timed out after {self.config.timeout}s") from exc
        except ValueError as exc:
            raise EngineError("Invalid JSON response") from exc

        try:
            content = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise EngineError(f"Invalid API response: {exc}") from exc
        text = _to_text(content)
        logger.debug("%s reply for %s/%s: %d chars", request.kind.value, request.query_id, request.reference_id, len(text))
        return text

    async def close(self) -> None:
        if self._session is not None and not self._session.closed:
            await self._session.close()
        self._session = None
