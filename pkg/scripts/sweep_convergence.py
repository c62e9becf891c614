"""Sweep the convergence threshold and watch when the story loop settles.

Runs the simulated backends over one synthetic album for a grid of epsilon
values and both chat temperaments (settling vs. wandering), then prints the
round count, stop reason, and final edit ratio for each cell. Useful for
eyeballing how tight a threshold the loop can realistically meet.
"""
from __future__ import annotations

import argparse
import tempfile
from pathlib import Path

from albumstory.backends.mock import MockCaptioner, SimulatedChatBackend
from albumstory.model import Album, Photo, RunConfig
from albumstory.pipeline import run

ALBUM_ID = "travel/v01"


def make_album(n: int) -> Album:
    photos = tuple(
        Photo(
            id=f"{ALBUM_ID}/{i:02d}.jpg",
            album_id=ALBUM_ID,
            path=f"{ALBUM_ID}/{i:02d}.jpg",
            index=i,
        )
        for i in range(n)
    )
    return Album(id=ALBUM_ID, category="travel", photos=photos)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--photos", type=int, default=4)
    parser.add_argument("--seed", type=int, default=11)
    parser.add_argument(
        "--epsilons", default="0.05,0.2,0.5", help="comma-separated thresholds"
    )
    args = parser.parse_args()

    album = make_album(args.photos)
    epsilons = [float(x) for x in args.epsilons.split(",")]
    loader = lambda photo: f"pixels of {photo.path}".encode()

    print(f"{'mode':<10}{'epsilon':>8}{'rounds':>8}{'stop':>12}{'last ratio':>12}")
    for mode in ("converge", "wander"):
        for epsilon in epsilons:
            config = RunConfig(seed=args.seed, epsilon=epsilon)
            with tempfile.TemporaryDirectory() as tmp:
                trace = run(
                    album,
                    config,
                    MockCaptioner(),
                    SimulatedChatBackend(seed=args.seed, mode=mode),
                    Path(tmp),
                    loader,
                )
            last = trace.rounds[-1].edit_ratio
            shown = "-" if last is None else f"{last:.3f}"
            print(
                f"{mode:<10}{epsilon:>8.2f}{len(trace.rounds):>8}"
                f"{trace.stop_reason.value:>12}{shown:>12}"
            )


if __name__ == "__main__":
    main()
