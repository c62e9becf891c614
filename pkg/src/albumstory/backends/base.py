"""Client contracts for the three model services (captioner, chat, embedder).

Every implementation — networked or mock — raises BackendError for service
trouble and plain ValueError for caller mistakes (precondition violations),
so the pipeline can tell "retry/abort" apart from "fix your code".
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Optional, Protocol, Sequence

import numpy as np

BACKEND_ERROR_KINDS = ("transport", "protocol", "rate_limited", "service")

CHAT_ROLES = ("system", "user", "assistant")


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self) -> None:
        if self.role not in CHAT_ROLES:
            raise ValueError(f"unknown chat role {self.role!r}")
        if self.role in ("user", "assistant") and not self.content:
            raise ValueError(f"{self.role} message content must be non-empty")

    def to_dict(self) -> dict[str, str]:
        return {"role": self.role, "content": self.content}


@dataclass(frozen=True)
class DecodingParams:
    temperature: float = 0.0
    max_tokens: int = 2048

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")


@dataclass(frozen=True)
class EmbeddingVector:
    """Unit-norm embedding; all vectors in one evaluation share a dim."""

    values: tuple[float, ...]
    dim: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if self.dim != len(self.values) or self.dim < 1:
            raise ValueError(f"dim {self.dim} != len(values) {len(self.values)}")
        norm = float(np.linalg.norm(self.values))
        if abs(norm - 1.0) > 1e-6:
            raise ValueError(f"embedding norm {norm} not within 1e-6 of 1")

    @classmethod
    def unit(cls, raw: Sequence[float]) -> "EmbeddingVector":
        """Normalize a raw vector to unit length; zero vectors are rejected."""
        arr = np.asarray(raw, dtype=float)
        norm = float(np.linalg.norm(arr))
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("embedding must be a non-empty 1-d vector")
        if norm == 0.0:
            raise ValueError("cannot normalize a zero embedding")
        return cls(values=tuple(arr / norm), dim=arr.size)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)


class BackendError(Exception):
    """A model-service failure: transport, protocol, rate_limited, or service."""

    def __init__(self, kind: str, detail: str, retryable: bool = False):
        if kind not in BACKEND_ERROR_KINDS:
            raise ValueError(f"unknown backend error kind {kind!r}")
        # Rate limiting is transient by definition.
        if kind == "rate_limited":
            retryable = True
        self.kind = kind
        self.detail = detail
        self.retryable = retryable
        super().__init__(f"[{kind}] {detail}")


class Captioner(Protocol):
    def caption(self, image: bytes) -> str: ...

    def refine_caption(self, image: bytes, story_chunk: str) -> str: ...


class ChatBackend(Protocol):
    def chat(self, messages: Sequence[ChatMessage], params: DecodingParams) -> str: ...


class Embedder(Protocol):
    def embed_image(self, image: bytes) -> EmbeddingVector: ...

    def embed_text(self, text: str) -> EmbeddingVector: ...


def call_with_retries(
    fn: Callable[[], str],
    *,
    retries: int = 5,
    initial_delay: float = 1.0,
    multiplier: float = 2.0,
    sleep: Optional[Callable[[float], None]] = None,
) -> str:
    """Run fn, retrying retryable BackendErrors with exponential backoff.

    Five retries at 1 s ×2 cap the worst case near half a minute. The call
    closure must be idempotent: it is re-invoked with identical payloads.
    """
    do_sleep = time.sleep if sleep is None else sleep
    delay = initial_delay
    attempts = retries + 1
    for attempt in range(attempts):
        try:
            return fn()
        except BackendError as err:
            if not err.retryable or attempt == attempts - 1:
                raise
            do_sleep(delay)
            delay *= multiplier
    raise AssertionError("unreachable")
