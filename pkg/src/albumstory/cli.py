"""Operator entry point: ingest, run, eval, synth-dataset, report.

Exit codes are stable: 0 success, 2 validation failure, 3 backend failure,
4 parse failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

from . import dataset, metrics, pipeline
from .backends.base import BackendError, DecodingParams
from .backends.http import HttpCaptioner, HttpChatBackend, HttpEmbedder
from .backends.mock import MockCaptioner, SemanticEmbedder, SimulatedChatBackend
from .config import load_run_config
from .model import RunConfig
from .prompts import ParseFailure

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_BACKEND = 3
EXIT_PARSE = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="albumstory",
        description="Turn photo albums into stories and evaluate the results.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML or JSON config file")
    common.add_argument(
        "--out-dir", type=Path, default=Path("out"), help="output directory"
    )
    common.add_argument("--seed", type=int, help="seed for all mock randomness")

    sub = parser.add_subparsers(dest="command", required=True)

    ingest = sub.add_parser(
        "ingest", parents=[common], help="build an album manifest from a frame tree"
    )
    ingest.add_argument("--frames-root", type=Path, required=True)
    ingest.add_argument(
        "--strict",
        action="store_true",
        help="require the five canonical categories and 10 frames per album",
    )

    run = sub.add_parser(
        "run", parents=[common], help="run the story loop over manifest albums"
    )
    run.add_argument("--manifest", type=Path, required=True)
    run.add_argument("--album", default="all", help="album id or 'all'")
    run.add_argument(
        "--frames-root",
        type=Path,
        help="image root (default: the manifest's directory)",
    )
    run.add_argument("--jobs", type=int, default=1, help="albums run in parallel")

    evaluate = sub.add_parser(
        "eval", parents=[common], help="score trace files into eval reports"
    )
    evaluate.add_argument("--trace", type=Path, required=True, help="trace file or dir")
    evaluate.add_argument(
        "--metrics",
        default="emd,detail,coverage,coherence",
        help="comma-separated metric list",
    )
    evaluate.add_argument(
        "--offline",
        action="store_true",
        help="skip chat-judge metrics (they stay marked skipped)",
    )
    evaluate.add_argument("--images-root", type=Path, help="root for photo paths")

    synth = sub.add_parser(
        "synth-dataset",
        parents=[common],
        help="synthesize (image, noisy story, caption) training triplets",
    )
    synth.add_argument("--paragraphs", type=Path, required=True)

    report = sub.add_parser(
        "report", parents=[common], help="aggregate eval reports into one table"
    )
    report.add_argument(
        "--eval-dir", type=Path, help="directory of eval reports (default: out dir)"
    )
    return parser


def _load_config(args: argparse.Namespace) -> RunConfig:
    return load_run_config(args.config, {"seed": args.seed})


def _build_backends(config: RunConfig):
    if config.backend_mode == "mock":
        return (
            MockCaptioner(),
            SimulatedChatBackend(seed=config.seed),
            SemanticEmbedder(dim=config.embed_dim),
        )
    return (
        HttpCaptioner(config.captioner),
        HttpChatBackend(config.chat),
        HttpEmbedder(config.embedder),
    )


def _backend_ids(config: RunConfig) -> dict[str, str]:
    if config.backend_mode == "mock":
        return {"chat": "mock", "embedder": "mock", "captioner": "mock"}
    return {
        "chat": config.chat.model or config.chat.endpoint,
        "embedder": config.embedder.model or config.embedder.endpoint,
        "captioner": config.captioner.model or config.captioner.endpoint,
    }


def cmd_ingest(args: argparse.Namespace) -> int:
    manifest, violations = dataset.build_manifest(args.frames_root, strict=args.strict)
    out_path = args.out_dir / "manifest.json"
    dataset.write_manifest(out_path, manifest)
    print(f"manifest: {out_path} ({len(manifest.collections)} collections)")
    for violation in violations:
        print(f"violation: {violation}", file=sys.stderr)
    return EXIT_VALIDATION if violations else EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    config = _load_config(args)
    manifest = dataset.load_manifest(args.manifest)
    albums = dataset.manifest_albums(manifest)
    if args.album != "all":
        albums = [a for a in albums if a.id == args.album]
        if not albums:
            print(f"album {args.album!r} not in manifest", file=sys.stderr)
            return EXIT_VALIDATION
    frames_root = args.frames_root or args.manifest.parent
    captioner, chat, _ = _build_backends(config)
    load_image = pipeline.file_image_loader(frames_root)

    def run_one(album) -> None:
        trace = pipeline.run(
            album,
            config,
            captioner,
            chat,
            args.out_dir,
            load_image,
            config.template_overrides or None,
        )
        print(
            f"{album.id}: {trace.stop_reason.value} after "
            f"{len(trace.rounds)} rounds -> "
            f"{pipeline.trace_path_for(args.out_dir, album.id)}"
        )

    try:
        if args.jobs > 1:
            with ThreadPoolExecutor(max_workers=args.jobs) as pool:
                for future in [pool.submit(run_one, a) for a in albums]:
                    future.result()
        else:
            for album in albums:
                run_one(album)
    except pipeline.PipelineRoundError as err:
        print(f"run failed: {err} (trace preserved)", file=sys.stderr)
        if isinstance(err.cause, ParseFailure):
            return EXIT_PARSE
        return EXIT_BACKEND
    except BackendError as err:
        print(f"run failed: {err}", file=sys.stderr)
        return EXIT_BACKEND
    except (ValueError, OSError) as err:
        print(f"run failed: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


def _trace_files(target: Path) -> list[Path]:
    if target.is_file():
        return [target]
    return sorted(target.rglob("trace.json"))


def cmd_eval(args: argparse.Namespace) -> int:
    config = _load_config(args)
    wanted = tuple(m.strip() for m in args.metrics.split(",") if m.strip())
    _, chat, embedder = _build_backends(config)
    params = DecodingParams(config.temperature, config.max_tokens)
    trace_files = _trace_files(args.trace)
    if not trace_files:
        print(f"no trace files under {args.trace}", file=sys.stderr)
        return EXIT_VALIDATION
    images_root = args.images_root or args.trace
    written = 0
    for trace_file in trace_files:
        trace = pipeline.load_trace(trace_file)
        if trace is None or not trace.rounds:
            print(f"skipping empty trace {trace_file}", file=sys.stderr)
            continue
        try:
            images = [
                (images_root / caption.photo_id).read_bytes()
                for caption in trace.rounds[0].captions
            ]
        except OSError as err:
            print(f"cannot read album images: {err}", file=sys.stderr)
            return EXIT_VALIDATION
        try:
            reports = metrics.evaluate_album(
                trace,
                images,
                embedder if "emd" in wanted else None,
                chat,
                params,
                metrics=wanted,
                offline=args.offline,
                backend_ids=_backend_ids(config),
                overrides=config.template_overrides or None,
            )
        except BackendError as err:
            print(f"eval failed: {err}", file=sys.stderr)
            return EXIT_BACKEND
        except ValueError as err:
            print(f"eval failed: {err}", file=sys.stderr)
            return EXIT_VALIDATION
        for report in reports:
            out_path = args.out_dir / report.album_id / f"eval_{report.stage}.json"
            out_path.parent.mkdir(parents=True, exist_ok=True)
            out_path.write_text(
                json.dumps(report.to_dict(), indent=2, ensure_ascii=False) + "\n",
                encoding="utf-8",
            )
            written += 1
    print(f"wrote {written} eval reports under {args.out_dir}")
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    config = _load_config(args)
    try:
        records = dataset.read_paragraph_records(args.paragraphs)
    except (ValueError, OSError, json.JSONDecodeError) as err:
        print(f"cannot read paragraphs: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    _, chat, _ = _build_backends(config)
    params = DecodingParams(config.temperature, config.max_tokens)
    try:
        result = dataset.synthesize_triplets(
            records, chat, params, config.template_overrides or None
        )
    except BackendError as err:
        print(f"synthesis failed: {err}", file=sys.stderr)
        return EXIT_BACKEND
    out_path = args.out_dir / "triplets.jsonl"
    dataset.write_triplets(out_path, result.triplets)
    for warning in result.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    print(
        f"wrote {len(result.triplets)} triplets to {out_path} "
        f"({result.skipped} skipped)"
    )
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    eval_dir = args.eval_dir or args.out_dir
    report_files = sorted(Path(eval_dir).rglob("eval_*.json"))
    if not report_files:
        print(f"no eval reports under {eval_dir}", file=sys.stderr)
        return EXIT_VALIDATION
    reports = [
        metrics.EvalReport.from_dict(json.loads(p.read_text(encoding="utf-8")))
        for p in report_files
    ]
    aggregate = metrics.aggregate_reports(reports)
    table = metrics.format_table(aggregate)
    diagnostics = metrics.trend_diagnostics(reports)
    print(table)
    for line in diagnostics:
        print(line)
    out_path = args.out_dir / "report.json"
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(
        json.dumps(
            {"aggregate": aggregate, "diagnostics": diagnostics},
            indent=2,
            ensure_ascii=False,
        )
        + "\n",
        encoding="utf-8",
    )
    print(f"report: {out_path}")
    return EXIT_OK


_COMMANDS = {
    "ingest": cmd_ingest,
    "run": cmd_run,
    "eval": cmd_eval,
    "synth-dataset": cmd_synth,
    "report": cmd_report,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
