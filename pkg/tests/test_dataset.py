"""Manifest building, extractor provenance, and triplet synthesis."""
from __future__ import annotations

import json
from pathlib import Path

import pytest

from albumstory.backends.base import DecodingParams
from albumstory.backends.mock import ScriptedChatBackend, SimulatedChatBackend
from albumstory.dataset import (
    STRICT_FRAME_COUNT,
    Manifest,
    ManifestEntry,
    StoryCaptionTriplet,
    build_manifest,
    extractor_command,
    extractor_provenance,
    load_manifest,
    manifest_albums,
    read_paragraph_records,
    synthesize_triplets,
    validate_triplets,
    write_manifest,
    write_triplets,
)

PARAMS = DecodingParams(temperature=0.0, max_tokens=128)


def make_tree(root: Path, layout: dict[str, int], suffix: str = ".jpg") -> None:
    """layout maps 'category/album' to a frame count."""
    for album, count in layout.items():
        album_dir = root / album
        album_dir.mkdir(parents=True)
        for i in range(count):
            (album_dir / f"frame_{i:03d}{suffix}").write_bytes(b"JPEG" + bytes([i]))


# --- manifest ------------------------------------------------------------------

def test_build_manifest_walks_sorted_and_relative(tmp_path):
    make_tree(tmp_path, {"travel/v02": 3, "travel/v01": 2, "wedding/v01": 1})
    manifest, violations = build_manifest(tmp_path)
    assert violations == []
    ids = [entry.album_id for entry in manifest.collections]
    assert ids == ["travel/v01", "travel/v02", "wedding/v01"]
    first = manifest.collections[0]
    assert first.category == "travel"
    assert first.frames == ("travel/v01/frame_000.jpg", "travel/v01/frame_001.jpg")


def test_build_manifest_ignores_non_frame_files(tmp_path):
    make_tree(tmp_path, {"travel/v01": 2})
    (tmp_path / "travel/v01/notes.txt").write_text("not a frame")
    manifest, _ = build_manifest(tmp_path)
    assert len(manifest.collections[0].frames) == 2


def test_strict_mode_enforces_category_and_frame_count(tmp_path):
    make_tree(tmp_path, {"travel/v01": STRICT_FRAME_COUNT, "holiday/v01": STRICT_FRAME_COUNT, "wedding/v01": 3})
    manifest, violations = build_manifest(tmp_path, strict=True)
    assert any("holiday" in v for v in violations)
    assert any("wedding/v01" in v and "3" in v for v in violations)
    kept = [e.album_id for e in manifest.collections]
    assert kept == ["travel/v01"]


def test_lax_mode_notes_unknown_categories(tmp_path):
    make_tree(tmp_path, {"holiday/v01": 2})
    manifest, violations = build_manifest(tmp_path, strict=False)
    assert violations == []
    assert [e.album_id for e in manifest.collections] == ["holiday/v01"]
    assert manifest.notes  # free-form category is remarked upon


def test_empty_album_directory_is_a_violation(tmp_path):
    make_tree(tmp_path, {"travel/v01": 2})
    (tmp_path / "travel" / "v02").mkdir()
    _, violations = build_manifest(tmp_path)
    assert any("no frames" in v for v in violations)


def test_manifest_round_trip_and_albums(tmp_path):
    make_tree(tmp_path, {"travel/v01": 2, "party/v01": 3})
    manifest, _ = build_manifest(tmp_path)
    path = tmp_path / "manifest.json"
    write_manifest(path, manifest)
    assert load_manifest(path) == manifest
    albums = manifest_albums(manifest)
    assert [a.id for a in albums] == ["party/v01", "travel/v01"]
    album = albums[0]
    assert [p.index for p in album.photos] == [0, 1, 2]
    assert album.photos[0].id == "party/v01/frame_000.jpg"
    assert album.photos[0].path == "party/v01/frame_000.jpg"


def test_manifest_entry_requires_frames():
    with pytest.raises(ValueError):
        ManifestEntry(album_id="a/b", category="a", frames=())


# --- extractor provenance -------------------------------------------------------

def test_extractor_command_is_replayable():
    command = extractor_command("ffmpeg", Path("in.mp4"), "out/f_%03d.jpg", 0.4)
    assert command[0] == "ffmpeg"
    assert "select='gt(scene,0.4)'" in " ".join(command)
    provenance = extractor_provenance(command)
    assert provenance.startswith("ffmpeg ")
    # shell-quoted: pasting the provenance line reruns the same extraction
    assert "gt(scene,0.4)" in provenance


# --- triplet synthesis ----------------------------------------------------------

def test_triplet_invariants():
    with pytest.raises(ValueError):
        StoryCaptionTriplet(image_ref="", noisy_story="n", detailed_caption="d")
    with pytest.raises(ValueError):
        StoryCaptionTriplet(image_ref="i", noisy_story="same", detailed_caption="same")


def test_synthesize_uses_two_calls_per_record():
    chat = ScriptedChatBackend(["bright happy park story", "dark sad park story"])
    report = synthesize_triplets(
        [{"image_ref": "img1.jpg", "detailed_caption": "a park"}], chat, PARAMS
    )
    assert report.skipped == 0 and report.warnings == ()
    (triplet,) = report.triplets
    assert triplet.noisy_story == "dark sad park story"
    assert triplet.detailed_caption == "a park"
    assert len(chat.calls) == 2


def test_synthesize_skips_uncorrupted_and_incomplete_records():
    same = "identical story both times"
    chat = ScriptedChatBackend([same, same, "vivid tale", "twisted tale"])
    records = [
        {"image_ref": "a.jpg", "detailed_caption": "caption a"},  # corruption no-op
        {"image_ref": "", "detailed_caption": "caption b"},  # missing ref
        {"image_ref": "c.jpg", "detailed_caption": "caption c"},  # fine
    ]
    report = synthesize_triplets(records, chat, PARAMS)
    assert len(report.triplets) == 1
    assert report.skipped == 2
    assert len(report.warnings) == 2
    assert any("unchanged" in w for w in report.warnings)


def test_synthesis_counts_add_up_on_larger_batch():
    records = []
    replies = []
    for i in range(20):
        if i % 7 == 3:  # 3, 10, 17 fail the corruption step
            records.append({"image_ref": f"{i}.jpg", "detailed_caption": f"cap {i}"})
            replies += [f"story {i}", f"story {i}"]
        else:
            records.append({"image_ref": f"{i}.jpg", "detailed_caption": f"cap {i}"})
            replies += [f"story {i}", f"anti story {i}"]
    report = synthesize_triplets(records, ScriptedChatBackend(replies), PARAMS)
    assert len(report.triplets) == 17
    assert report.skipped == 3


def test_simulated_backend_round_trips_triplets(tmp_path):
    records = [
        {"image_ref": "a.jpg", "detailed_caption": "a dog on bright green grass"},
        {"image_ref": "b.jpg", "detailed_caption": "an empty cold beach at dawn"},
    ]
    report = synthesize_triplets(records, SimulatedChatBackend(seed=1), PARAMS)
    assert report.skipped == 0
    path = tmp_path / "triplets.jsonl"
    write_triplets(path, report.triplets)
    assert validate_triplets(path) == []
    lines = path.read_text().strip().split("\n")
    assert len(lines) == 2
    assert set(json.loads(lines[0])) == {"image_ref", "noisy_story", "detailed_caption"}


def test_validate_triplets_reports_issues(tmp_path):
    path = tmp_path / "triplets.jsonl"
    rows = [
        {"image_ref": "a.jpg", "noisy_story": "n", "detailed_caption": "d"},
        {"image_ref": "a.jpg", "noisy_story": "n2", "detailed_caption": "d2"},
        {"image_ref": "b.jpg", "noisy_story": "same", "detailed_caption": "same"},
        {"image_ref": "c.jpg", "noisy_story": "n3"},
    ]
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\nnot json\n")
    issues = validate_triplets(path)
    assert any(i.startswith("warning:") and "duplicate" in i for i in issues)
    errors = [i for i in issues if i.startswith("error:")]
    assert len(errors) == 3  # invariant breach, missing key, bad JSON line


def test_read_paragraph_records_accepts_array_and_jsonl(tmp_path):
    rows = [
        {"image_ref": "a.jpg", "detailed_caption": "cap a"},
        {"image_ref": "b.jpg", "detailed_caption": "cap b"},
    ]
    array_path = tmp_path / "records.json"
    array_path.write_text(json.dumps(rows))
    jsonl_path = tmp_path / "records.jsonl"
    jsonl_path.write_text("\n".join(json.dumps(r) for r in rows))
    assert read_paragraph_records(array_path) == rows
    assert read_paragraph_records(jsonl_path) == rows
    bad = tmp_path / "bad.json"
    bad.write_text('"just a string"')
    with pytest.raises(ValueError):
        read_paragraph_records(bad)
