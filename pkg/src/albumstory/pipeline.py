"""The story loop: initial story, refine rounds until the edit ratio settles,
then one coherence pass; every round is checkpointed and resumable.

Rounds are strictly sequential (each consumes the previous story). A failed
round never leaves a partial trace entry: the trace keeps completed rounds,
gets stamped stop_reason=error, and the error is re-raised with the trace
attached.
"""

from __future__ import annotations

import json
import logging
import os
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence

from .backends.base import (
    BackendError,
    Captioner,
    ChatBackend,
    ChatMessage,
    DecodingParams,
)
from .model import (
    Album,
    Caption,
    CaptionKind,
    IterationTrace,
    RoundResult,
    RunConfig,
    StopReason,
    Story,
    StoryChunk,
    StoryStage,
    pair_records_from_story,
    trace_from_dict,
    trace_to_dict,
    validate_album,
)
from .prompts import (
    ParseFailure,
    corrective_tip,
    parse_pair_records,
    parse_story_list,
    render_initial,
    render_refine,
    render_ultimate,
)
from .textdist import edit_ratio as _text_edit_ratio
from .textdist import has_converged

logger = logging.getLogger(__name__)

ImageLoader = Callable[..., bytes]


class PipelineRoundError(Exception):
    """A round failed after retries; .trace holds everything completed."""

    def __init__(self, message: str, trace: IterationTrace, cause: Exception):
        super().__init__(message)
        self.trace = trace
        self.cause = cause


def file_image_loader(root: Path) -> Callable:
    """Resolve photo paths against a run-time root directory."""

    def load(photo) -> bytes:
        return (Path(root) / photo.path).read_bytes()

    return load


def edit_ratio(prev_story: Story, next_story: Story) -> float:
    """Character-level edit distance between whole-story texts, normalized
    by the NEW story's length."""
    return _text_edit_ratio(prev_story.text, next_story.text)


def _structured_chat(
    chat: ChatBackend,
    messages: list[ChatMessage],
    params: DecodingParams,
    parse: Callable[[str], tuple],
    noun: str,
) -> tuple:
    """One chat call with a single corrective retry on a parse failure."""
    text = chat.chat(messages, params)
    try:
        value, warnings = parse(text)
        return value, list(warnings)
    except ParseFailure as failure:
        retry = list(messages) + [
            ChatMessage("assistant", text if text.strip() else "(empty reply)"),
            ChatMessage("user", corrective_tip(failure, noun)),
        ]
        logger.warning("parse failed (%s); sending corrective tip", failure.kind)
        second = chat.chat(retry, params)
        value, warnings = parse(second)
        return value, [f"recovered after {failure.kind} via corrective tip", *warnings]


def generate_initial(
    album: Album,
    captioner: Captioner,
    chat: ChatBackend,
    config: RunConfig,
    load_image: ImageLoader,
    overrides: Optional[Mapping[str, str]] = None,
) -> RoundResult:
    """Round 0: plain captions for every photo, then one story over them."""
    violations = validate_album(album)
    if violations:
        raise ValueError(f"invalid album {album.id!r}: {violations}")
    params = DecodingParams(config.temperature, config.max_tokens)
    base_captions = [captioner.caption(load_image(photo)) for photo in album.photos]
    records = pair_records_from_story(album, base_captions)
    paths = [photo.path for photo in album.photos]
    parsed, warnings = _structured_chat(
        chat,
        render_initial(records, overrides),
        params,
        lambda text: parse_pair_records(text, paths, "initial_story"),
        noun="records",
    )
    captions = tuple(
        Caption(photo_id=photo.id, text=base_captions[i], round=0, kind=CaptionKind.PLAIN)
        for i, photo in enumerate(album.photos)
    )
    story = Story(
        album_id=album.id,
        chunks=tuple(
            StoryChunk(photo_id=photo.id, text=parsed[i].initial_story)
            for i, photo in enumerate(album.photos)
        ),
        round=0,
        stage=StoryStage.INITIAL,
    )
    return RoundResult(t=0, captions=captions, story=story, edit_ratio=None, warnings=warnings)


def refine_round(
    album: Album,
    base_captions: Sequence[str],
    prev: RoundResult,
    captioner: Captioner,
    chat: ChatBackend,
    config: RunConfig,
    load_image: ImageLoader,
    overrides: Optional[Mapping[str, str]] = None,
) -> RoundResult:
    """Round t+1: story-aware captions from the previous round's chunks, then
    a story revision over them; each photo sees only its own chunk."""
    if len(prev.story.chunks) != album.size:
        raise ValueError(
            f"previous story has {len(prev.story.chunks)} chunks for "
            f"{album.size} photos"
        )
    params = DecodingParams(config.temperature, config.max_tokens)
    t = prev.t + 1
    refine_captions = [
        captioner.refine_caption(load_image(photo), prev.story.chunks[i].text)
        for i, photo in enumerate(album.photos)
    ]
    records = pair_records_from_story(
        album, list(base_captions), story=prev.story, refine_captions=refine_captions
    )
    paths = [photo.path for photo in album.photos]
    parsed, warnings = _structured_chat(
        chat,
        render_refine(records, overrides),
        params,
        lambda text: parse_pair_records(text, paths, "refine_story"),
        noun="records",
    )
    captions = tuple(
        Caption(
            photo_id=photo.id,
            text=refine_captions[i],
            round=t,
            kind=CaptionKind.STORY_AWARE,
        )
        for i, photo in enumerate(album.photos)
    )
    story = Story(
        album_id=album.id,
        chunks=tuple(
            StoryChunk(photo_id=photo.id, text=parsed[i].refine_story)
            for i, photo in enumerate(album.photos)
        ),
        round=t,
        stage=StoryStage.REFINED,
    )
    ratio = edit_ratio(prev.story, story)
    return RoundResult(t=t, captions=captions, story=story, edit_ratio=ratio, warnings=warnings)


def finalize(
    story: Story,
    chat: ChatBackend,
    config: RunConfig,
    overrides: Optional[Mapping[str, str]] = None,
) -> Story:
    """Coherence pass: stitch the chunk stories together, keeping exactly N."""
    params = DecodingParams(config.temperature, config.max_tokens)
    texts = [chunk.text for chunk in story.chunks]
    stitched, warnings = _structured_chat(
        chat,
        render_ultimate(texts, overrides),
        params,
        lambda text: (parse_story_list(text, len(texts)), []),
        noun="stories",
    )
    for warning in warnings:
        logger.warning("finalize: %s", warning)
    return Story(
        album_id=story.album_id,
        chunks=tuple(
            StoryChunk(photo_id=chunk.photo_id, text=stitched[i])
            for i, chunk in enumerate(story.chunks)
        ),
        round=story.round,
        stage=StoryStage.ULTIMATE,
    )


def trace_path_for(out_dir: Path, album_id: str) -> Path:
    return Path(out_dir) / album_id / "trace.json"


def write_trace(path: Path, trace: IterationTrace) -> None:
    """Atomic checkpoint: write a sibling temp file, then rename over."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = json.dumps(trace_to_dict(trace), indent=2, ensure_ascii=False) + "\n"
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(payload, encoding="utf-8")
    os.replace(tmp, path)


def load_trace(path: Path) -> Optional[IterationTrace]:
    path = Path(path)
    if not path.exists():
        return None
    return trace_from_dict(json.loads(path.read_text(encoding="utf-8")))


def run(
    album: Album,
    config: RunConfig,
    captioner: Captioner,
    chat: ChatBackend,
    out_dir: Path,
    load_image: ImageLoader,
    overrides: Optional[Mapping[str, str]] = None,
) -> IterationTrace:
    """Drive the full loop for one album, checkpointing after every round.

    A pre-existing trace file resumes at the first incomplete round; the
    already-recorded rounds trigger no backend calls.
    """
    trace_path = trace_path_for(out_dir, album.id)
    existing = load_trace(trace_path)
    rounds: list[RoundResult] = []
    ultimate: Optional[Story] = None
    if existing is not None:
        if existing.album_id != album.id:
            raise ValueError(
                f"trace at {trace_path} is for album {existing.album_id!r}"
            )
        if dict(existing.config) != config.to_dict():
            raise ValueError(
                f"trace at {trace_path} was produced with a different config; "
                "use a fresh out dir or matching settings"
            )
        if existing.ultimate_story is not None:
            return existing
        rounds = list(existing.rounds)
        ultimate = existing.ultimate_story

    def snapshot(stop: Optional[StopReason]) -> IterationTrace:
        return IterationTrace(
            album_id=album.id,
            config=config.to_dict(),
            rounds=tuple(rounds),
            stop_reason=stop,
            ultimate_story=ultimate,
        )

    def checkpoint(stop: Optional[StopReason]) -> IterationTrace:
        trace = snapshot(stop)
        write_trace(trace_path, trace)
        return trace

    def fail(err: Exception) -> PipelineRoundError:
        trace = checkpoint(StopReason.ERROR)
        return PipelineRoundError(str(err), trace=trace, cause=err)

    if not rounds:
        try:
            rounds.append(
                generate_initial(album, captioner, chat, config, load_image, overrides)
            )
        except (ParseFailure, BackendError) as err:
            raise fail(err) from err
        checkpoint(None)

    base_captions = [c.text for c in rounds[0].captions]

    while True:
        last = rounds[-1]
        if last.t >= 1 and has_converged(last.edit_ratio, config.epsilon):
            stop = StopReason.CONVERGED
            break
        if last.t >= config.u_max:
            stop = StopReason.MAX_ROUNDS
            break
        try:
            rounds.append(
                refine_round(
                    album, base_captions, last, captioner, chat, config,
                    load_image, overrides,
                )
            )
        except (ParseFailure, BackendError) as err:
            raise fail(err) from err
        checkpoint(None)

    try:
        ultimate = finalize(rounds[-1].story, chat, config, overrides)
    except (ParseFailure, BackendError) as err:
        # The refined story survives in the trace for degraded consumption.
        raise fail(err) from err
    return checkpoint(stop)
