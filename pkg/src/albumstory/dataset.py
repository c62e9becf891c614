"""Dataset tooling: the evaluation-album manifest and the synthesized
(image, noisy story, detailed caption) training triplets.

Manifest building is deterministic (lexicographic walk), so the same frame
tree always yields a byte-identical manifest file. Key-frame extraction from
source videos is delegated to an external extractor binary; only the
invocation contract lives here.
"""

from __future__ import annotations

import json
import shlex
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Sequence

from .backends.base import ChatBackend, DecodingParams
from .model import ALBUM_CATEGORIES, Album, Photo
from .prompts import render_synth_antonym, render_synth_vivid

_FRAME_SUFFIXES = (".jpg", ".jpeg", ".png")
STRICT_FRAME_COUNT = 10


@dataclass(frozen=True)
class ManifestEntry:
    album_id: str
    category: str
    frames: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "frames", tuple(self.frames))
        if not self.frames:
            raise ValueError(f"collection {self.album_id!r} has no frames")


@dataclass(frozen=True)
class Manifest:
    collections: tuple[ManifestEntry, ...]
    notes: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "collections", tuple(self.collections))
        object.__setattr__(self, "notes", dict(self.notes))

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "collections": [
                {
                    "album_id": entry.album_id,
                    "category": entry.category,
                    "frames": list(entry.frames),
                }
                for entry in self.collections
            ]
        }
        if self.notes:
            out["notes"] = dict(self.notes)
        return out

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Manifest":
        return cls(
            collections=tuple(
                ManifestEntry(
                    album_id=c["album_id"],
                    category=c["category"],
                    frames=tuple(c["frames"]),
                )
                for c in data["collections"]
            ),
            notes=data.get("notes", {}),
        )


def build_manifest(
    frames_root: Path, strict: bool = False
) -> tuple[Manifest, list[str]]:
    """Walk <category>/<album>/<frame> and collect one entry per album dir.

    Strict mode pins the five canonical categories and exactly ten frames
    per collection; violations come back as data, not exceptions.
    """
    root = Path(frames_root)
    if not root.is_dir():
        raise ValueError(f"frames root {root} is not a directory")
    entries: list[ManifestEntry] = []
    notes: dict[str, str] = {}
    violations: list[str] = []
    for category_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        category = category_dir.name
        if category not in ALBUM_CATEGORIES:
            if strict:
                violations.append(
                    f"{category_dir}: category {category!r} not in "
                    f"{sorted(ALBUM_CATEGORIES)}"
                )
                continue  # strict manifests carry only conforming entries
            notes[category] = "free-form category accepted (non-strict mode)"
        for album_dir in sorted(p for p in category_dir.iterdir() if p.is_dir()):
            frames = sorted(
                str(p.relative_to(root))
                for p in album_dir.iterdir()
                if p.is_file() and p.suffix.lower() in _FRAME_SUFFIXES
            )
            if not frames:
                violations.append(f"{album_dir}: no frames found")
                continue
            if strict and len(frames) != STRICT_FRAME_COUNT:
                violations.append(
                    f"{album_dir}: expected {STRICT_FRAME_COUNT} frames, "
                    f"found {len(frames)}"
                )
                continue
            entries.append(
                ManifestEntry(
                    album_id=f"{category}/{album_dir.name}",
                    category=category,
                    frames=tuple(frames),
                )
            )
    return Manifest(collections=tuple(entries), notes=notes), violations


def write_manifest(path: Path, manifest: Manifest) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    payload = json.dumps(manifest.to_dict(), indent=2, ensure_ascii=False) + "\n"
    Path(path).write_text(payload, encoding="utf-8")


def load_manifest(path: Path) -> Manifest:
    return Manifest.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def manifest_albums(manifest: Manifest) -> list[Album]:
    """Materialize Album values; the photo id is its relative path."""
    albums = []
    for entry in manifest.collections:
        photos = tuple(
            Photo(id=frame, album_id=entry.album_id, path=frame, index=i)
            for i, frame in enumerate(entry.frames)
        )
        albums.append(Album(id=entry.album_id, category=entry.category, photos=photos))
    return albums


def extractor_command(
    executable: str, video: Path, out_pattern: str, threshold: float
) -> list[str]:
    """Invocation contract for the external key-frame extractor.

    The caller runs this and records the exact command line in provenance
    notes; scene selection beyond the threshold stays a human step.
    """
    return [
        executable,
        "-i",
        str(video),
        "-vf",
        f"select='gt(scene,{threshold})'",
        "-vsync",
        "vfr",
        out_pattern,
    ]


def extractor_provenance(command: Sequence[str]) -> str:
    return shlex.join(command)


# --- training triplets ---------------------------------------------------------

@dataclass(frozen=True)
class StoryCaptionTriplet:
    """One training record: the image, a corrupted vivid story, and the
    ground-truth detailed caption the model must reconstruct."""

    image_ref: str
    noisy_story: str
    detailed_caption: str

    def __post_init__(self) -> None:
        for name in ("image_ref", "noisy_story", "detailed_caption"):
            if not getattr(self, name).strip():
                raise ValueError(f"{name} must be non-empty")
        if self.noisy_story == self.detailed_caption:
            raise ValueError("noisy_story must differ from detailed_caption")

    def to_dict(self) -> dict[str, str]:
        return {
            "image_ref": self.image_ref,
            "noisy_story": self.noisy_story,
            "detailed_caption": self.detailed_caption,
        }


@dataclass(frozen=True)
class SynthesisReport:
    triplets: tuple[StoryCaptionTriplet, ...]
    skipped: int
    warnings: tuple[str, ...]


def synthesize_triplets(
    paragraph_records: Sequence[Mapping[str, str]],
    chat: ChatBackend,
    params: DecodingParams,
    overrides: Optional[Mapping[str, str]] = None,
) -> SynthesisReport:
    """Two chat calls per record: vivid rewrite, then antonym corruption.

    Records with empty replies, or where the corruption step changed
    nothing, are skipped with a warning rather than failing the batch.
    """
    triplets: list[StoryCaptionTriplet] = []
    warnings: list[str] = []
    for i, record in enumerate(paragraph_records):
        image_ref = str(record.get("image_ref", "")).strip()
        caption = str(record.get("detailed_caption", "")).strip()
        if not image_ref or not caption:
            warnings.append(f"record {i}: missing image_ref or detailed_caption")
            continue
        vivid = chat.chat(render_synth_vivid(caption, overrides), params).strip()
        if not vivid:
            warnings.append(f"record {i} ({image_ref}): empty vivid rewrite")
            continue
        noisy = chat.chat(render_synth_antonym(vivid, overrides), params).strip()
        if not noisy:
            warnings.append(f"record {i} ({image_ref}): empty corruption reply")
            continue
        if noisy == vivid:
            warnings.append(
                f"record {i} ({image_ref}): corruption left the story unchanged"
            )
            continue
        try:
            triplets.append(
                StoryCaptionTriplet(
                    image_ref=image_ref,
                    noisy_story=noisy,
                    detailed_caption=caption,
                )
            )
        except ValueError as err:
            warnings.append(f"record {i} ({image_ref}): {err}")
    return SynthesisReport(
        triplets=tuple(triplets),
        skipped=len(paragraph_records) - len(triplets),
        warnings=tuple(warnings),
    )


def write_triplets(path: Path, triplets: Iterable[StoryCaptionTriplet]) -> None:
    """One JSON object per line: streamable and appendable."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        for triplet in triplets:
            handle.write(json.dumps(triplet.to_dict(), ensure_ascii=False) + "\n")


def validate_triplets(path: Path) -> list[str]:
    """Schema and invariant check; duplicate image_refs warn, not fail."""
    violations: list[str] = []
    seen_refs: dict[str, int] = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as err:
        return [f"error: cannot read {path}: {err}"]
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            data = json.loads(line)
        except json.JSONDecodeError as err:
            violations.append(f"error: line {lineno}: invalid JSON ({err})")
            continue
        if not isinstance(data, dict):
            violations.append(f"error: line {lineno}: not an object")
            continue
        missing = [
            key
            for key in ("image_ref", "noisy_story", "detailed_caption")
            if not isinstance(data.get(key), str) or not data[key].strip()
        ]
        if missing:
            violations.append(
                f"error: line {lineno}: missing or empty {', '.join(missing)}"
            )
            continue
        if data["noisy_story"] == data["detailed_caption"]:
            violations.append(
                f"error: line {lineno}: noisy_story equals detailed_caption"
            )
        ref = data["image_ref"]
        if ref in seen_refs:
            violations.append(
                f"warning: line {lineno}: duplicate image_ref {ref!r} "
                f"(first at line {seen_refs[ref]})"
            )
        else:
            seen_refs[ref] = lineno
    return violations


def read_paragraph_records(path: Path) -> list[dict[str, str]]:
    """Input for synthesis: JSON-lines or a single JSON array of
    {image_ref, detailed_caption} objects."""
    text = Path(path).read_text(encoding="utf-8").strip()
    if not text:
        raise ValueError(f"{path} is empty")
    if text.startswith("["):
        rows = json.loads(text)
    else:
        rows = [json.loads(line) for line in text.splitlines() if line.strip()]
    if not isinstance(rows, list) or not all(isinstance(r, dict) for r in rows):
        raise ValueError("paragraph file must hold JSON objects (array or lines)")
    return [dict(r) for r in rows]
