"""Domain types shared across the engine: albums, captions, stories, run traces.

Everything here is an immutable value object with a plain-dict serialization,
so records can be checkpointed to JSON and shared freely between tasks.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional, Sequence

ALBUM_CATEGORIES = ("birthday", "camping", "christmas", "travel", "wedding")


class CaptionKind(str, enum.Enum):
    PLAIN = "plain"
    STORY_AWARE = "story_aware"


class StoryStage(str, enum.Enum):
    INITIAL = "initial"
    REFINED = "refined"
    ULTIMATE = "ultimate"


class StopReason(str, enum.Enum):
    CONVERGED = "converged"
    MAX_ROUNDS = "max_rounds"
    ERROR = "error"


@dataclass(frozen=True)
class Photo:
    """One image in an album; identified by its relative path."""

    id: str
    album_id: str
    path: str
    index: int


@dataclass(frozen=True)
class Album:
    id: str
    category: str
    photos: tuple[Photo, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "photos", tuple(self.photos))

    @property
    def size(self) -> int:
        return len(self.photos)


@dataclass(frozen=True)
class Caption:
    photo_id: str
    text: str
    round: int
    kind: CaptionKind

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError("caption text must be non-empty")
        if self.round < 0:
            raise ValueError("caption round must be >= 0")
        expected = CaptionKind.PLAIN if self.round == 0 else CaptionKind.STORY_AWARE
        if self.kind is not expected:
            raise ValueError(
                f"round {self.round} captions must have kind {expected.value!r}"
            )


@dataclass(frozen=True)
class StoryChunk:
    photo_id: str
    text: str

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValueError("story chunk text must be non-empty")


@dataclass(frozen=True)
class Story:
    album_id: str
    chunks: tuple[StoryChunk, ...]
    round: int
    stage: StoryStage

    def __post_init__(self) -> None:
        object.__setattr__(self, "chunks", tuple(self.chunks))
        if not self.chunks:
            raise ValueError("story must have at least one chunk")

    @property
    def text(self) -> str:
        """Whole-story text: chunks joined by a single newline."""
        return "\n".join(chunk.text for chunk in self.chunks)


@dataclass(frozen=True)
class PairRecord:
    """The structured caption/story unit exchanged with the chat model.

    ``img_path`` must stay byte-for-byte equal to the ingested photo path;
    the reply parser restores it if the model mutates it.
    """

    img_path: str
    caption: str
    initial_story: Optional[str] = None
    refine_caption: Optional[str] = None
    refine_story: Optional[str] = None

    def __post_init__(self) -> None:
        if not self.img_path:
            raise ValueError("img_path must be non-empty")

    def to_dict(self) -> dict[str, str]:
        out: dict[str, str] = {"img_path": self.img_path, "caption": self.caption}
        for key in ("initial_story", "refine_caption", "refine_story"):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        return out


@dataclass(frozen=True)
class RoundResult:
    """One pipeline round: its captions, the resulting story, and the edit
    ratio to the previous round (None for round 0)."""

    t: int
    captions: tuple[Caption, ...]
    story: Story
    edit_ratio: Optional[float]
    warnings: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "captions", tuple(self.captions))
        object.__setattr__(self, "warnings", tuple(self.warnings))
        if len(self.captions) != len(self.story.chunks):
            raise ValueError(
                f"round {self.t}: {len(self.captions)} captions vs "
                f"{len(self.story.chunks)} story chunks"
            )
        if self.t == 0 and self.edit_ratio is not None:
            raise ValueError("round 0 has no edit ratio")
        if self.t > 0 and (self.edit_ratio is None or self.edit_ratio < 0):
            raise ValueError("refine rounds require edit_ratio >= 0")


@dataclass(frozen=True)
class IterationTrace:
    """Full per-album run record; persisted as JSON after every round."""

    album_id: str
    config: Mapping[str, Any]
    rounds: tuple[RoundResult, ...]
    stop_reason: Optional[StopReason]
    ultimate_story: Optional[Story]

    def __post_init__(self) -> None:
        object.__setattr__(self, "rounds", tuple(self.rounds))
        object.__setattr__(self, "config", dict(self.config))
        if self.stop_reason is StopReason.CONVERGED:
            epsilon = self.config.get("epsilon")
            last = self.rounds[-1].edit_ratio if self.rounds else None
            if epsilon is not None and (last is None or not last < epsilon):
                raise ValueError(
                    "stop_reason=converged requires last edit_ratio < epsilon"
                )

    @property
    def last_story(self) -> Optional[Story]:
        """The best story available: ultimate if present, else the latest round's."""
        if self.ultimate_story is not None:
            return self.ultimate_story
        if self.rounds:
            return self.rounds[-1].story
        return None


@dataclass(frozen=True)
class EndpointConfig:
    """Where a networked backend lives; the credential is an env-var NAME,
    never a stored secret."""

    endpoint: str = ""
    model: str = ""
    api_key_env: str = ""

    def to_dict(self) -> dict[str, str]:
        return {
            "endpoint": self.endpoint,
            "model": self.model,
            "api_key_env": self.api_key_env,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "EndpointConfig":
        return cls(
            endpoint=str(data.get("endpoint", "")),
            model=str(data.get("model", "")),
            api_key_env=str(data.get("api_key_env", "")),
        )


@dataclass(frozen=True)
class RunConfig:
    u_max: int = 5
    epsilon: float = 0.2
    temperature: float = 0.0
    max_tokens: int = 2048
    seed: int = 0
    backend_mode: str = "mock"  # mock | http
    chat: EndpointConfig = field(default_factory=EndpointConfig)
    embedder: EndpointConfig = field(default_factory=EndpointConfig)
    captioner: EndpointConfig = field(default_factory=EndpointConfig)
    embed_dim: int = 16
    template_overrides: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "template_overrides", dict(self.template_overrides))
        if self.u_max < 1:
            raise ValueError("u_max must be >= 1")
        if not (0 < self.epsilon <= 1):
            raise ValueError("epsilon must be in (0, 1]")
        if self.backend_mode not in ("mock", "http"):
            raise ValueError(f"unknown backend_mode {self.backend_mode!r}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "u_max": self.u_max,
            "epsilon": self.epsilon,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
            "seed": self.seed,
            "backend_mode": self.backend_mode,
            "chat": self.chat.to_dict(),
            "embedder": self.embedder.to_dict(),
            "captioner": self.captioner.to_dict(),
            "embed_dim": self.embed_dim,
            "template_overrides": dict(self.template_overrides),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "RunConfig":
        kwargs: dict[str, Any] = {}
        for key in (
            "u_max",
            "epsilon",
            "temperature",
            "max_tokens",
            "seed",
            "backend_mode",
            "embed_dim",
            "template_overrides",
        ):
            if key in data:
                kwargs[key] = data[key]
        for key in ("chat", "embedder", "captioner"):
            if key in data:
                kwargs[key] = EndpointConfig.from_dict(data[key])
        return cls(**kwargs)


def validate_album(album: Album) -> list[str]:
    """Check album invariants; returns human-readable violations (empty = valid)."""
    violations: list[str] = []
    if album.category not in ALBUM_CATEGORIES:
        violations.append(
            f"category: {album.category!r} not one of {sorted(ALBUM_CATEGORIES)}"
        )
    if not album.photos:
        violations.append("photos: empty")
        return violations
    seen: dict[str, int] = {}
    for photo in album.photos:
        if photo.album_id != album.id:
            violations.append(
                f"album_id: photo {photo.id!r} belongs to {photo.album_id!r}"
            )
        if not photo.path:
            violations.append(f"path: empty for photo {photo.id!r}")
            continue
        if photo.path in seen:
            violations.append(
                f"path: duplicate {photo.path!r} at indices {seen[photo.path]} "
                f"and {photo.index} (photo {photo.id!r})"
            )
        else:
            seen[photo.path] = photo.index
    indices = [photo.index for photo in album.photos]
    if indices != list(range(len(album.photos))):
        violations.append(f"index: expected 0..{len(album.photos) - 1}, got {indices}")
    return violations


def pair_records_from_story(
    album: Album,
    base_captions: Sequence[str],
    story: Optional[Story] = None,
    refine_captions: Optional[Sequence[str]] = None,
) -> list[PairRecord]:
    """Build the per-photo record list for the chat protocol.

    Always length N, in photo order. ``base_captions`` are the round-0 texts;
    when ``story`` is given its chunk i becomes record i's initial_story.
    """
    if len(base_captions) != album.size:
        raise ValueError("one base caption per photo required")
    if story is not None and len(story.chunks) != album.size:
        raise ValueError("story chunk count must match album size")
    if refine_captions is not None and len(refine_captions) != album.size:
        raise ValueError("one refine caption per photo required")
    records = []
    for i, photo in enumerate(album.photos):
        records.append(
            PairRecord(
                img_path=photo.path,
                caption=base_captions[i],
                initial_story=story.chunks[i].text if story is not None else None,
                refine_caption=refine_captions[i] if refine_captions else None,
            )
        )
    return records


# --- dict (de)serialization -------------------------------------------------

def photo_to_dict(photo: Photo) -> dict[str, Any]:
    return {
        "id": photo.id,
        "album_id": photo.album_id,
        "path": photo.path,
        "index": photo.index,
    }


def photo_from_dict(data: Mapping[str, Any]) -> Photo:
    return Photo(
        id=data["id"],
        album_id=data["album_id"],
        path=data["path"],
        index=int(data["index"]),
    )


def album_to_dict(album: Album) -> dict[str, Any]:
    return {
        "id": album.id,
        "category": album.category,
        "photos": [photo_to_dict(p) for p in album.photos],
    }


def album_from_dict(data: Mapping[str, Any]) -> Album:
    return Album(
        id=data["id"],
        category=data["category"],
        photos=tuple(photo_from_dict(p) for p in data["photos"]),
    )


def caption_to_dict(caption: Caption) -> dict[str, Any]:
    return {
        "photo_id": caption.photo_id,
        "text": caption.text,
        "round": caption.round,
        "kind": caption.kind.value,
    }


def caption_from_dict(data: Mapping[str, Any]) -> Caption:
    return Caption(
        photo_id=data["photo_id"],
        text=data["text"],
        round=int(data["round"]),
        kind=CaptionKind(data["kind"]),
    )


def story_to_dict(story: Story) -> dict[str, Any]:
    return {
        "album_id": story.album_id,
        "round": story.round,
        "stage": story.stage.value,
        "chunks": [{"photo_id": c.photo_id, "text": c.text} for c in story.chunks],
    }


def story_from_dict(data: Mapping[str, Any]) -> Story:
    return Story(
        album_id=data["album_id"],
        chunks=tuple(
            StoryChunk(photo_id=c["photo_id"], text=c["text"]) for c in data["chunks"]
        ),
        round=int(data["round"]),
        stage=StoryStage(data["stage"]),
    )


def round_to_dict(result: RoundResult) -> dict[str, Any]:
    return {
        "t": result.t,
        "captions": [caption_to_dict(c) for c in result.captions],
        "story": story_to_dict(result.story),
        "edit_ratio": result.edit_ratio,
        "warnings": list(result.warnings),
    }


def round_from_dict(data: Mapping[str, Any]) -> RoundResult:
    return RoundResult(
        t=int(data["t"]),
        captions=tuple(caption_from_dict(c) for c in data["captions"]),
        story=story_from_dict(data["story"]),
        edit_ratio=data.get("edit_ratio"),
        warnings=tuple(data.get("warnings", ())),
    )


def trace_to_dict(trace: IterationTrace) -> dict[str, Any]:
    return {
        "album_id": trace.album_id,
        "config": dict(trace.config),
        "rounds": [round_to_dict(r) for r in trace.rounds],
        "stop_reason": trace.stop_reason.value if trace.stop_reason else None,
        "ultimate_story": (
            story_to_dict(trace.ultimate_story) if trace.ultimate_story else None
        ),
    }


def trace_from_dict(data: Mapping[str, Any]) -> IterationTrace:
    return IterationTrace(
        album_id=data["album_id"],
        config=data.get("config", {}),
        rounds=tuple(round_from_dict(r) for r in data["rounds"]),
        stop_reason=StopReason(data["stop_reason"]) if data.get("stop_reason") else None,
        ultimate_story=(
            story_from_dict(data["ultimate_story"])
            if data.get("ultimate_story")
            else None
        ),
    )
