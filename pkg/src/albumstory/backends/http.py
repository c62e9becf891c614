"""Networked backend clients over chat-completions-style HTTP endpoints.

All three clients share one error taxonomy: connection trouble is
``transport``, HTTP 429 is ``rate_limited``, 5xx is ``service`` (both
retryable), anything else malformed is ``protocol`` (not retryable).
Retryable calls are resent with exponential backoff and identical payloads.
"""

from __future__ import annotations

import base64
import os
from typing import Any, Callable, Optional, Sequence

import httpx

from ..model import EndpointConfig
from .base import (
    BackendError,
    ChatMessage,
    DecodingParams,
    EmbeddingVector,
    call_with_retries,
)

_TIMEOUT_S = 60.0


def _post_json(
    client: httpx.Client,
    url: str,
    payload: dict[str, Any],
    headers: dict[str, str],
) -> Any:
    try:
        response = client.post(url, json=payload, headers=headers, timeout=_TIMEOUT_S)
    except httpx.HTTPError as err:
        raise BackendError("transport", f"POST {url}: {err}", retryable=True) from err
    if response.status_code == 429:
        raise BackendError("rate_limited", f"POST {url}: HTTP 429")
    if response.status_code >= 500:
        raise BackendError(
            "service", f"POST {url}: HTTP {response.status_code}", retryable=True
        )
    if response.status_code >= 400:
        raise BackendError(
            "protocol",
            f"POST {url}: HTTP {response.status_code}: {response.text[:200]}",
        )
    try:
        return response.json()
    except ValueError as err:
        raise BackendError("protocol", f"POST {url}: non-JSON response") from err


class _HttpBase:
    def __init__(
        self,
        config: EndpointConfig,
        client: Optional[httpx.Client] = None,
        sleep: Optional[Callable[[float], None]] = None,
    ):
        if not config.endpoint:
            raise ValueError("endpoint must be configured for networked backends")
        self._config = config
        self._client = client if client is not None else httpx.Client()
        self._sleep = sleep

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self._config.api_key_env:
            key = os.environ.get(self._config.api_key_env, "")
            if key:
                headers["Authorization"] = f"Bearer {key}"
        return headers

    def _call(self, fn: Callable[[], Any]) -> Any:
        return call_with_retries(fn, sleep=self._sleep)


class HttpChatBackend(_HttpBase):
    """Chat-completions endpoint: {model, messages, temperature, max_tokens}."""

    def chat(self, messages: Sequence[ChatMessage], params: DecodingParams) -> str:
        if not any(m.role == "user" for m in messages):
            raise ValueError("chat requires at least one user message")
        payload = {
            "model": self._config.model,
            "messages": [m.to_dict() for m in messages],
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
        }

        def once() -> str:
            data = _post_json(
                self._client, self._config.endpoint, payload, self._headers()
            )
            try:
                content = data["choices"][0]["message"]["content"]
            except (KeyError, IndexError, TypeError) as err:
                raise BackendError(
                    "protocol", f"chat response missing choices: {err!r}"
                ) from err
            if not isinstance(content, str) or not content.strip():
                raise BackendError("protocol", "chat response content is empty")
            return content.rstrip()

        return self._call(once)


class HttpEmbedder(_HttpBase):
    """Embeddings endpoint: {model, input: [...]} -> vectors in input order.

    Images are sent base64-encoded; the service decides how to decode them.
    """

    def __init__(self, *args: Any, **kwargs: Any):
        super().__init__(*args, **kwargs)
        self._dim: Optional[int] = None

    def embed_text(self, text: str) -> EmbeddingVector:
        if not text:
            raise ValueError("cannot embed empty text")
        return self._embed_one(text)

    def embed_image(self, image: bytes) -> EmbeddingVector:
        if not image:
            raise ValueError("cannot embed empty image payload")
        return self._embed_one(base64.b64encode(image).decode("ascii"))

    def _embed_one(self, item: str) -> EmbeddingVector:
        payload = {"model": self._config.model, "input": [item]}

        def once() -> Any:
            return _post_json(
                self._client, self._config.endpoint, payload, self._headers()
            )

        data = self._call(once)
        rows = data.get("data", data) if isinstance(data, dict) else data
        if not isinstance(rows, list) or len(rows) != 1:
            raise BackendError("protocol", "embedding response is not a 1-item list")
        row = rows[0]
        if isinstance(row, dict):
            row = row.get("embedding")
        if not isinstance(row, list) or not row:
            raise BackendError("protocol", "embedding row is not a float array")
        try:
            vector = EmbeddingVector.unit(row)
        except ValueError as err:
            raise BackendError("protocol", f"bad embedding: {err}") from err
        if self._dim is None:
            self._dim = vector.dim
        elif vector.dim != self._dim:
            raise BackendError(
                "protocol",
                f"embedding dim changed mid-run: {vector.dim} != {self._dim}",
            )
        return vector


class HttpCaptioner(_HttpBase):
    """Caption service: POST /caption {image_b64} and /refine {image_b64, story}."""

    def caption(self, image: bytes) -> str:
        if not image:
            raise ValueError("image payload must be non-empty")
        return self._caption_request("/caption", {"image_b64": _b64(image)})

    def refine_caption(self, image: bytes, story_chunk: str) -> str:
        if not image:
            raise ValueError("image payload must be non-empty")
        if not story_chunk:
            raise ValueError("story_chunk must be non-empty")
        return self._caption_request(
            "/refine", {"image_b64": _b64(image), "story": story_chunk}
        )

    def _caption_request(self, route: str, payload: dict[str, str]) -> str:
        url = self._config.endpoint.rstrip("/") + route

        def once() -> str:
            data = _post_json(self._client, url, payload, self._headers())
            caption = data.get("caption") if isinstance(data, dict) else None
            if not isinstance(caption, str) or not caption.strip():
                raise BackendError("protocol", f"{route} returned an empty caption")
            return caption.strip()

        return self._call(once)


def _b64(image: bytes) -> str:
    return base64.b64encode(image).decode("ascii")
