"""Invariants and round-trips for the core record types."""
from __future__ import annotations

import pytest

from albumstory.model import (
    ALBUM_CATEGORIES,
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
    pair_records_from_story,
    trace_from_dict,
    trace_to_dict,
    validate_album,
)


def make_album(n: int = 3, aid: str = "travel/v01") -> Album:
    photos = tuple(
        Photo(id=f"{aid}/{i:02d}.jpg", album_id=aid, path=f"{aid}/{i:02d}.jpg", index=i)
        for i in range(n)
    )
    return Album(id=aid, category=aid.split("/")[0], photos=photos)


def make_round(album: Album, t: int, stage: StoryStage = StoryStage.INITIAL) -> RoundResult:
    kind = CaptionKind.PLAIN if t == 0 else CaptionKind.STORY_AWARE
    captions = tuple(
        Caption(photo_id=p.id, text=f"caption {p.index} r{t}", round=t, kind=kind)
        for p in album.photos
    )
    chunks = tuple(StoryChunk(photo_id=p.id, text=f"chunk {p.index} round {t}") for p in album.photos)
    story = Story(album_id=album.id, chunks=chunks, round=t, stage=stage)
    return RoundResult(
        t=t, captions=captions, story=story, edit_ratio=None if t == 0 else 0.5
    )


def test_story_text_joins_chunks_with_newline():
    album = make_album(2)
    story = make_round(album, 0).story
    assert story.text == "chunk 0 round 0\nchunk 1 round 0"


def test_caption_round_zero_must_be_plain():
    with pytest.raises(ValueError):
        Caption(photo_id="p", text="x", round=0, kind=CaptionKind.STORY_AWARE)
    with pytest.raises(ValueError):
        Caption(photo_id="p", text="", round=1, kind=CaptionKind.STORY_AWARE)


def test_round_result_requires_matching_lengths_and_ratio_rules():
    album = make_album(2)
    good = make_round(album, 1)
    with pytest.raises(ValueError):
        RoundResult(t=1, captions=good.captions[:1], story=good.story, edit_ratio=0.5)
    with pytest.raises(ValueError):
        RoundResult(t=0, captions=make_round(album, 0).captions, story=good.story, edit_ratio=0.1)
    with pytest.raises(ValueError):
        RoundResult(t=2, captions=good.captions, story=good.story, edit_ratio=None)


def test_pair_record_dict_omits_absent_fields():
    rec = PairRecord(img_path="a.jpg", caption="a dog")
    assert rec.to_dict() == {"img_path": "a.jpg", "caption": "a dog"}
    rec2 = PairRecord(img_path="a.jpg", caption="a dog", initial_story="s")
    assert set(rec2.to_dict()) == {"img_path", "caption", "initial_story"}


def test_pair_records_from_story_stages():
    album = make_album(2)
    base = ["dog", "park"]
    plain = pair_records_from_story(album, base)
    assert [r.to_dict() for r in plain] == [
        {"img_path": album.photos[0].path, "caption": "dog"},
        {"img_path": album.photos[1].path, "caption": "park"},
    ]
    story = make_round(album, 0).story
    with_story = pair_records_from_story(album, base, story=story)
    assert with_story[1].initial_story == "chunk 1 round 0"
    refined = pair_records_from_story(
        album, base, story=story, refine_captions=["d2", "p2"]
    )
    assert refined[0].refine_caption == "d2"
    with pytest.raises(ValueError):
        pair_records_from_story(album, base[:1])
    with pytest.raises(ValueError):
        pair_records_from_story(album, base, story=story, refine_captions=["only one"])


def test_validate_album_flags_problems():
    album = make_album(3)
    assert validate_album(album) == []
    bad_cat = Album(id="zzz/v1", category="zzz", photos=make_album(2, "zzz/v1").photos)
    assert any("category" in issue for issue in validate_album(bad_cat))
    assert "travel" in ALBUM_CATEGORIES


def test_run_config_validation_and_round_trip():
    config = RunConfig(seed=3, u_max=4, epsilon=0.25)
    assert RunConfig.from_dict(config.to_dict()) == config
    with pytest.raises(ValueError):
        RunConfig(u_max=0)
    with pytest.raises(ValueError):
        RunConfig(epsilon=0.0)
    with pytest.raises(ValueError):
        RunConfig(backend_mode="quantum")


def test_trace_round_trip_and_schema_names():
    album = make_album(2)
    settled = make_round(album, 1, StoryStage.REFINED)
    # A converged trace must end below epsilon, so pin the last ratio down.
    settled = RoundResult(
        t=settled.t, captions=settled.captions, story=settled.story, edit_ratio=0.05
    )
    rounds = (make_round(album, 0), settled)
    ultimate = Story(
        album_id=album.id,
        chunks=rounds[1].story.chunks,
        round=1,
        stage=StoryStage.ULTIMATE,
    )
    trace = IterationTrace(
        album_id=album.id,
        config=RunConfig().to_dict(),
        rounds=rounds,
        stop_reason=StopReason.CONVERGED,
        ultimate_story=ultimate,
    )
    data = trace_to_dict(trace)
    assert set(data) >= {"album_id", "config", "rounds", "stop_reason", "ultimate_story"}
    assert data["stop_reason"] == "converged"
    assert {"t", "captions", "story", "edit_ratio"} <= set(data["rounds"][0])
    assert data["rounds"][0]["story"]["stage"] == "initial"
    assert trace_from_dict(data) == trace


def test_trace_convergence_consistency_guard():
    album = make_album(2)
    r0 = make_round(album, 0)
    big_jump = RoundResult(
        t=1, captions=make_round(album, 1).captions, story=make_round(album, 1).story, edit_ratio=0.9
    )
    with pytest.raises(ValueError):
        IterationTrace(
            album_id=album.id,
            config=RunConfig().to_dict(),
            rounds=(r0, big_jump),
            stop_reason=StopReason.CONVERGED,
            ultimate_story=None,
        )


def test_trace_last_story_prefers_ultimate():
    album = make_album(2)
    rounds = (make_round(album, 0),)
    trace = IterationTrace(
        album_id=album.id,
        config=RunConfig().to_dict(),
        rounds=rounds,
        stop_reason=None,
        ultimate_story=None,
    )
    assert trace.last_story is rounds[0].story
