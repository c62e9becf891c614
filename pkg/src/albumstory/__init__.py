"""Album storytelling engine: iterative story-aware captioning with chat-model
story revision, plus exact-EMD and judge-based evaluation."""

__version__ = "0.1.0"

from .model import (
    Album,
    Caption,
    CaptionKind,
    IterationTrace,
    PairRecord,
    Photo,
    RoundResult,
    RunConfig,
    StopReason,
    Story,
    StoryChunk,
    StoryStage,
)

__all__ = [
    "Album",
    "Caption",
    "CaptionKind",
    "IterationTrace",
    "PairRecord",
    "Photo",
    "RoundResult",
    "RunConfig",
    "StopReason",
    "Story",
    "StoryChunk",
    "StoryStage",
    "__version__",
]
