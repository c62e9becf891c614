"""End-to-end offline demo: fake frames -> manifest -> story loop -> report.

Everything runs against the simulated backends, so the demo needs no network
and finishes in a few seconds. Artifacts land under --work-dir for inspection:
the manifest, one trace.json per album, per-stage eval reports, and the
aggregate report table.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from albumstory.cli import main as cli

ALBUMS = {
    "travel/v01": 4,
    "wedding/v01": 3,
    "camping/v01": 5,
}


def build_frame_tree(root: Path) -> Path:
    frames = root / "frames"
    for album, count in ALBUMS.items():
        album_dir = frames / album
        album_dir.mkdir(parents=True, exist_ok=True)
        for i in range(count):
            # The mock captioner only hashes bytes, so tiny stand-ins suffice.
            (album_dir / f"frame_{i:03d}.jpg").write_bytes(b"JPEG" + bytes([i]))
    return frames


def step(args: list[str]) -> None:
    print(f"$ albumstory {' '.join(args)}")
    code = cli(args)
    if code != 0:
        sys.exit(code)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--work-dir", type=Path, default=Path("demo_out"))
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()

    args.work_dir.mkdir(parents=True, exist_ok=True)
    frames = build_frame_tree(args.work_dir)
    out = args.work_dir / "out"
    seed = str(args.seed)

    step(["ingest", "--frames-root", str(frames), "--out-dir", str(out)])
    step(
        [
            "run",
            "--manifest", str(out / "manifest.json"),
            "--frames-root", str(frames),
            "--out-dir", str(out),
            "--seed", seed,
        ]
    )
    step(
        [
            "eval",
            "--trace", str(out),
            "--images-root", str(frames),
            "--out-dir", str(out),
            "--seed", seed,
        ]
    )
    step(["report", "--eval-dir", str(out), "--out-dir", str(out)])
    print(f"\nartifacts under {out}")


if __name__ == "__main__":
    main()
