"""Deterministic offline backends for tests and network-free runs.

Every mock is a pure function of its inputs plus an explicit seed: replies
embed input hashes (so tests can assert which inputs were consulted) and
never depend on call order, which keeps resumed runs byte-identical with
fresh ones.
"""

from __future__ import annotations

import hashlib
import json
import re
from collections import deque
from typing import Iterable, Optional, Sequence

import numpy as np

from ..jsontools import find_json_span
from .base import BackendError, ChatMessage, DecodingParams, EmbeddingVector

_WORDS = (
    "amber", "lantern", "meadow", "harbor", "confetti", "ribbon", "summit",
    "ember", "willow", "mosaic", "tide", "orchard", "breeze", "garland",
    "canyon", "sparrow", "velvet", "aurora", "pebble", "carousel",
)

_ANTONYMS = {
    "warm": "cold", "bright": "dim", "happy": "sad", "big": "small",
    "sunny": "overcast", "endless": "fleeting", "vivid": "drab",
    "joyful": "mournful", "golden": "ashen", "gentle": "harsh",
}


def _digest(*parts: str) -> bytes:
    return hashlib.sha256("\x1f".join(parts).encode("utf-8")).digest()


def _word_salad(count: int, *key_parts: str) -> str:
    digest = _digest(*key_parts)
    # Two digest bytes per word keeps the index spread past 20 entries.
    picks = [
        _WORDS[(digest[(2 * i) % 32] * 256 + digest[(2 * i + 1) % 32]) % len(_WORDS)]
        for i in range(count)
    ]
    return " ".join(picks)


class MockCaptioner:
    """Captions are hashes of the exact inputs: easy to assert, impossible to fake."""

    def __init__(self) -> None:
        self.calls: list[tuple[str, ...]] = []

    def caption(self, image: bytes) -> str:
        if not image:
            raise ValueError("image payload must be non-empty")
        digest = hashlib.sha256(image).hexdigest()
        self.calls.append(("caption", digest[:8]))
        return f"mock caption {digest[:8]}"

    def refine_caption(self, image: bytes, story_chunk: str) -> str:
        if not image:
            raise ValueError("image payload must be non-empty")
        if not story_chunk:
            raise ValueError("story_chunk must be non-empty")
        image_hex = hashlib.sha256(image).hexdigest()
        pair_hex = hashlib.sha256((image_hex + story_chunk).encode("utf-8")).hexdigest()
        self.calls.append(("refine", pair_hex[:8], story_chunk))
        head = " ".join(story_chunk.split()[:5])
        return f"mock refined {pair_hex[:8]}: {head}"


class ScriptedChatBackend:
    """Replays a fixed queue of replies; running dry is a protocol error."""

    def __init__(self, replies: Iterable[str]):
        self._replies = deque(replies)
        self.calls: list[tuple[tuple[ChatMessage, ...], DecodingParams]] = []

    def chat(self, messages: Sequence[ChatMessage], params: DecodingParams) -> str:
        if not any(m.role == "user" for m in messages):
            raise ValueError("chat requires at least one user message")
        self.calls.append((tuple(messages), params))
        if not self._replies:
            raise BackendError("protocol", "scripted chat backend exhausted")
        return self._replies.popleft()


class HashEmbedder:
    """Seed-keyed pseudo-random unit vectors; equal inputs, equal vectors."""

    def __init__(self, dim: int = 16, seed: int = 0):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self._dim = dim
        self._seed = str(seed)

    def embed_text(self, text: str) -> EmbeddingVector:
        if not text:
            raise ValueError("cannot embed empty text")
        return self._vector("text", text)

    def embed_image(self, image: bytes) -> EmbeddingVector:
        if not image:
            raise ValueError("cannot embed empty image payload")
        return self._vector("image", image.hex())

    def _vector(self, space: str, key: str) -> EmbeddingVector:
        digest = _digest(self._seed, space, key)
        rng = np.random.default_rng(int.from_bytes(digest[:8], "big"))
        return EmbeddingVector.unit(rng.standard_normal(self._dim))


class SemanticEmbedder:
    """Bag-of-words embedding into hashed buckets.

    Equal strings map to equal vectors and texts sharing words to nearby
    ones, so alignment-ordering tests have a meaningful geometry. Image
    payloads are decoded as UTF-8 tag text (fixture images are tag strings).
    """

    _TOKEN_RE = re.compile(r"[a-z0-9]+")

    def __init__(self, dim: int = 64):
        if dim < 2:
            raise ValueError("dim must be >= 2")
        self._dim = dim

    def embed_text(self, text: str) -> EmbeddingVector:
        if not text:
            raise ValueError("cannot embed empty text")
        return self._vector(text)

    def embed_image(self, image: bytes) -> EmbeddingVector:
        if not image:
            raise ValueError("cannot embed empty image payload")
        return self._vector(image.decode("utf-8", errors="ignore"))

    def _vector(self, text: str) -> EmbeddingVector:
        counts = np.zeros(self._dim)
        for token in self._TOKEN_RE.findall(text.lower()):
            bucket = int.from_bytes(_digest("tok", token)[:4], "big") % self._dim
            counts[bucket] += 1.0
        if not counts.any():
            counts[0] = 1.0
        return EmbeddingVector.unit(counts)


class SimulatedChatBackend:
    """Fabricates protocol-correct replies for every prompt the engine sends.

    mode="converge": refine replies rewrite each chunk to a canonical text
    keyed only by (seed, img_path), so the second refine round reproduces the
    first and the edit ratio drops to zero. mode="wander": refine replies are
    keyed by the incoming story too, so no two rounds agree and runs hit the
    round cap. All replies are pure functions of (seed, mode, messages).
    """

    def __init__(self, seed: int = 0, mode: str = "converge"):
        if mode not in ("converge", "wander"):
            raise ValueError(f"unknown mode {mode!r}")
        self._seed = str(seed)
        self._mode = mode
        self.calls: list[str] = []

    # -- dispatch --------------------------------------------------------

    def chat(self, messages: Sequence[ChatMessage], params: DecodingParams) -> str:
        if not any(m.role == "user" for m in messages):
            raise ValueError("chat requires at least one user message")
        joined = "\n".join(m.content for m in messages if m.role == "user").lower()
        for kind, marker in (
            ("coverage", "caption group 1"),
            ("detail", "total number of details"),
            ("coherence", "coherence score"),
            ("refine", '"refine_story"'),
            ("initial", '"initial_story"'),
            ("ultimate", "you should return"),
            ("vivid", "vibrant paragraph"),
            ("antonym", "antonyms"),
        ):
            if marker in joined:
                self.calls.append(kind)
                return getattr(self, f"_reply_{kind}")(messages)
        raise BackendError("protocol", "simulated chat got an unrecognized prompt")

    @staticmethod
    def _last_user_with(messages: Sequence[ChatMessage], marker: str) -> str:
        for message in reversed(messages):
            if message.role == "user" and marker.lower() in message.content.lower():
                return message.content
        raise BackendError("protocol", f"no user message contains {marker!r}")

    @staticmethod
    def _embedded_records(content: str, after: str = "") -> list[dict]:
        start = content.rfind(after) + len(after) if after else 0
        span = find_json_span(content, start)
        if span is None:
            raise BackendError("protocol", "prompt carries no JSON payload")
        return json.loads(content[span[0] : span[1]])

    @staticmethod
    def _after_label(content: str, label: str) -> str:
        pos = content.rfind(label)
        if pos < 0:
            raise BackendError("protocol", f"prompt is missing {label!r}")
        return content[pos + len(label) :].strip()

    # -- story protocol --------------------------------------------------

    def _initial_story(self, path: str, caption: str) -> str:
        salad = _word_salad(6, self._seed, "init", path)
        return f"As the album opens, {caption} sets the scene, and {salad} follow."

    def _canonical_story(self, path: str, caption: str) -> str:
        salad = _word_salad(10, self._seed, "canon", path)
        return (
            f"Under a wide sky, {caption} anchors the moment while "
            f"{salad} gather around it."
        )

    def _wander_story(self, path: str, incoming: str) -> str:
        salad = _word_salad(12, self._seed, "wander", path, incoming)
        return f"Without warning the scene shifts: {salad}."

    def _reply_initial(self, messages: Sequence[ChatMessage]) -> str:
        content = self._last_user_with(messages, "photo captions from a vlog")
        records = self._embedded_records(content)
        reply = [
            {
                "img_path": r["img_path"],
                "caption": r["caption"],
                "initial_story": self._initial_story(r["img_path"], r["caption"]),
            }
            for r in records
        ]
        return json.dumps(reply, ensure_ascii=False)

    def _reply_refine(self, messages: Sequence[ChatMessage]) -> str:
        content = self._last_user_with(messages, "Data:")
        records = self._embedded_records(content, after="Data:")
        reply = []
        for r in records:
            if self._mode == "converge":
                story = self._canonical_story(r["img_path"], r.get("caption", ""))
            else:
                story = self._wander_story(r["img_path"], r.get("initial_story", ""))
            reply.append(
                {
                    "img_path": r["img_path"],
                    "caption": r.get("caption", ""),
                    "refine_story": story,
                }
            )
        return json.dumps(reply, ensure_ascii=False)

    def _reply_ultimate(self, messages: Sequence[ChatMessage]) -> str:
        content = self._last_user_with(messages, "Input:")
        stories = self._embedded_records(content, after="Input:")
        transitions = (
            "To begin,", "Soon after,", "In the next moment,",
            "Later that day,", "Before long,", "Finally,",
        )
        stitched = [
            f"{transitions[i % len(transitions)]} {story}"
            for i, story in enumerate(stories)
        ]
        return json.dumps(stitched, ensure_ascii=False)

    # -- judge prompts ----------------------------------------------------

    def _reply_detail(self, messages: Sequence[ChatMessage]) -> str:
        story = self._after_label(messages[-1].content, "Story:")
        count = max(1, len(story.split()) // 3)
        return f"Total number of details: {count}"

    def _reply_coverage(self, messages: Sequence[ChatMessage]) -> str:
        content = self._last_user_with(messages, "Caption group 1:")
        tail = self._after_label(content, "Caption group 1:")
        group1, _, rest = tail.partition("Caption group 2:")
        group2, _, story = rest.partition("Story:")
        g1 = self._overlap(group1, story)
        g2 = self._overlap(group2, story)
        avg = round((g1 + g2) / 2, 2)
        return (
            f"Score of story coverage for Caption Group 1: {g1:.2f}.\n"
            f"Score of story coverage for Caption Group 2: {g2:.2f}.\n"
            f"Average score: {avg:.2f}."
        )

    def _reply_coherence(self, messages: Sequence[ChatMessage]) -> str:
        story = self._after_label(messages[-1].content, "Story:")
        value = ((int.from_bytes(_digest(self._seed, "coh", story)[:4], "big") % 51) + 50) / 100
        return f"Coherence Score: {value:.2f}"

    @staticmethod
    def _overlap(group: str, story: str) -> float:
        group_tokens = set(re.findall(r"[a-z0-9]+", group.lower()))
        story_tokens = set(re.findall(r"[a-z0-9]+", story.lower()))
        if not group_tokens:
            return 0.0
        return round(len(group_tokens & story_tokens) / len(group_tokens), 2)

    # -- dataset synthesis -------------------------------------------------

    def _reply_vivid(self, messages: Sequence[ChatMessage]) -> str:
        caption = self._after_label(messages[-1].content, "Caption:")
        return (
            f"In a rush of warm golden light, {caption.rstrip('.')}. "
            "The vivid scene feels endless and joyful."
        )

    def _reply_antonym(self, messages: Sequence[ChatMessage]) -> str:
        story = self._after_label(messages[-1].content, "Story:")
        swapped = story
        for word, opposite in _ANTONYMS.items():
            swapped = re.sub(rf"\b{word}\b", opposite, swapped, flags=re.IGNORECASE)
        if swapped == story:
            swapped = f"Contrary to the photos, {story}"
        return swapped
