"""Model-service clients: shared contracts, HTTP implementations, and mocks."""

from .base import (
    BackendError,
    Captioner,
    ChatBackend,
    ChatMessage,
    DecodingParams,
    Embedder,
    EmbeddingVector,
    call_with_retries,
)
from .http import HttpCaptioner, HttpChatBackend, HttpEmbedder
from .mock import (
    HashEmbedder,
    MockCaptioner,
    ScriptedChatBackend,
    SemanticEmbedder,
    SimulatedChatBackend,
)

__all__ = [
    "BackendError",
    "Captioner",
    "ChatBackend",
    "ChatMessage",
    "DecodingParams",
    "Embedder",
    "EmbeddingVector",
    "call_with_retries",
    "HttpCaptioner",
    "HttpChatBackend",
    "HttpEmbedder",
    "HashEmbedder",
    "MockCaptioner",
    "ScriptedChatBackend",
    "SemanticEmbedder",
    "SimulatedChatBackend",
]
