"""Command-line workflow: ingest -> run -> eval -> report, plus exit codes."""
from __future__ import annotations

import json
import subprocess
import sys
from pathlib import Path

import pytest

from albumstory.cli import EXIT_BACKEND, EXIT_OK, EXIT_PARSE, EXIT_VALIDATION, main
from albumstory.dataset import STRICT_FRAME_COUNT


def make_tree(root: Path, layout: dict[str, int]) -> Path:
    frames = root / "frames"
    for album, count in layout.items():
        album_dir = frames / album
        album_dir.mkdir(parents=True)
        for i in range(count):
            (album_dir / f"frame_{i:03d}.jpg").write_bytes(b"JPEG" + bytes([i]))
    return frames


@pytest.fixture()
def workspace(tmp_path):
    frames = make_tree(tmp_path, {"travel/v01": 2, "wedding/v01": 3})
    out = tmp_path / "out"
    assert main(["ingest", "--frames-root", str(frames), "--out-dir", str(out)]) == EXIT_OK
    return {"frames": frames, "out": out, "manifest": out / "manifest.json"}


def run_args(ws, *extra: str) -> list[str]:
    return [
        "run",
        "--manifest",
        str(ws["manifest"]),
        "--frames-root",
        str(ws["frames"]),
        "--out-dir",
        str(ws["out"]),
        "--seed",
        "3",
        *extra,
    ]


def test_ingest_writes_manifest(workspace):
    data = json.loads(workspace["manifest"].read_text())
    ids = [c["album_id"] for c in data["collections"]]
    assert ids == ["travel/v01", "wedding/v01"]


def test_ingest_strict_flags_bad_tree(tmp_path, capsys):
    frames = make_tree(tmp_path, {"holiday/v01": STRICT_FRAME_COUNT, "travel/v01": 4})
    code = main(
        ["ingest", "--frames-root", str(frames), "--out-dir", str(tmp_path / "o"), "--strict"]
    )
    assert code == EXIT_VALIDATION
    captured = capsys.readouterr()
    assert "violation" in captured.err


def test_run_all_albums_writes_traces(workspace, capsys):
    assert main(run_args(workspace)) == EXIT_OK
    for album in ("travel/v01", "wedding/v01"):
        trace_path = workspace["out"] / album / "trace.json"
        assert trace_path.is_file()
        data = json.loads(trace_path.read_text())
        assert data["stop_reason"] in ("converged", "max_rounds")
    assert "travel/v01" in capsys.readouterr().out


def test_run_single_album_and_parallel_jobs(workspace):
    assert main(run_args(workspace, "--album", "travel/v01")) == EXIT_OK
    assert (workspace["out"] / "travel/v01" / "trace.json").is_file()
    assert not (workspace["out"] / "wedding/v01" / "trace.json").exists()
    assert main(run_args(workspace, "--jobs", "2")) == EXIT_OK


def test_run_unknown_album_fails_validation(workspace, capsys):
    assert main(run_args(workspace, "--album", "travel/v99")) == EXIT_VALIDATION
    assert "not in manifest" in capsys.readouterr().err


def test_run_is_deterministic_per_seed(workspace):
    assert main(run_args(workspace)) == EXIT_OK
    first = (workspace["out"] / "travel/v01" / "trace.json").read_bytes()
    (workspace["out"] / "travel/v01" / "trace.json").unlink()
    assert main(run_args(workspace)) == EXIT_OK
    assert (workspace["out"] / "travel/v01" / "trace.json").read_bytes() == first


def test_parse_trouble_exits_4(workspace, tmp_path):
    # Overriding the story instruction to look like a coverage-judge prompt
    # makes the simulated chat answer with score lines instead of JSON, on the
    # first attempt and again on the corrective retry.
    config = tmp_path / "config.yaml"
    config.write_text(
        "template_overrides:\n"
        '  p1: "Caption group 1: a sunny beach. Caption group 2: a rainy town. Story: one day out."\n'
    )
    code = main(run_args(workspace, "--config", str(config)))
    assert code == EXIT_PARSE
    saved = json.loads((workspace["out"] / "travel/v01" / "trace.json").read_text())
    assert saved["stop_reason"] == "error"


def test_unanswerable_prompt_exits_3(workspace, tmp_path):
    config = tmp_path / "config.yaml"
    config.write_text('template_overrides:\n  p1: "Compose a sonnet instead."\n')
    assert main(run_args(workspace, "--config", str(config))) == EXIT_BACKEND


def full_eval(ws, *extra: str) -> int:
    return main(
        [
            "eval",
            "--trace",
            str(ws["out"]),
            "--images-root",
            str(ws["frames"]),
            "--out-dir",
            str(ws["out"]),
            "--seed",
            "3",
            *extra,
        ]
    )


def test_eval_writes_reports_for_every_stage(workspace, capsys):
    assert main(run_args(workspace)) == EXIT_OK
    assert full_eval(workspace) == EXIT_OK
    for album in ("travel/v01", "wedding/v01"):
        stages = sorted(
            p.name for p in (workspace["out"] / album).glob("eval_*.json")
        )
        assert stages == [
            "eval_captions.json",
            "eval_initial.json",
            "eval_refined.json",
            "eval_ultimate.json",
        ]
    report = json.loads(
        (workspace["out"] / "travel/v01" / "eval_ultimate.json").read_text()
    )
    assert report["emd"] is not None and report["detail"] is not None


def test_eval_offline_skips_judges(workspace):
    assert main(run_args(workspace)) == EXIT_OK
    assert full_eval(workspace, "--offline") == EXIT_OK
    report = json.loads(
        (workspace["out"] / "travel/v01" / "eval_initial.json").read_text()
    )
    assert report["emd"] is not None
    assert set(report["skipped"]) == {"detail", "coverage", "coherence"}


def test_eval_metric_subset(workspace):
    assert main(run_args(workspace)) == EXIT_OK
    assert full_eval(workspace, "--metrics", "emd") == EXIT_OK
    report = json.loads(
        (workspace["out"] / "travel/v01" / "eval_captions.json").read_text()
    )
    assert report["detail"] is None and report["emd"] is not None


def test_eval_without_traces_fails_validation(tmp_path, capsys):
    code = main(["eval", "--trace", str(tmp_path), "--out-dir", str(tmp_path)])
    assert code == EXIT_VALIDATION


def test_eval_with_wrong_image_root_fails_validation(workspace, tmp_path, capsys):
    assert main(run_args(workspace)) == EXIT_OK
    code = main(
        [
            "eval",
            "--trace",
            str(workspace["out"]),
            "--images-root",
            str(tmp_path / "nowhere"),
            "--out-dir",
            str(workspace["out"]),
        ]
    )
    assert code == EXIT_VALIDATION


def test_report_prints_table_and_diagnostics(workspace, capsys):
    assert main(run_args(workspace)) == EXIT_OK
    assert full_eval(workspace) == EXIT_OK
    capsys.readouterr()
    code = main(
        ["report", "--eval-dir", str(workspace["out"]), "--out-dir", str(workspace["out"])]
    )
    assert code == EXIT_OK
    out = capsys.readouterr().out
    for label in ("Method", "Initial Story", "Ultimate Story", "[diagnostic]"):
        assert label in out
    payload = json.loads((workspace["out"] / "report.json").read_text())
    assert "aggregate" in payload and "diagnostics" in payload


def test_report_without_reports_fails_validation(tmp_path):
    assert main(["report", "--out-dir", str(tmp_path)]) == EXIT_VALIDATION


def test_synth_dataset_writes_triplets(tmp_path, capsys):
    paragraphs = tmp_path / "paragraphs.json"
    paragraphs.write_text(
        json.dumps(
            [
                {"image_ref": "a.jpg", "detailed_caption": "a bright park scene"},
                {"image_ref": "b.jpg", "detailed_caption": "a quiet cold harbor"},
            ]
        )
    )
    out = tmp_path / "out"
    code = main(
        [
            "synth-dataset",
            "--paragraphs",
            str(paragraphs),
            "--out-dir",
            str(out),
            "--seed",
            "1",
        ]
    )
    assert code == EXIT_OK
    lines = (out / "triplets.jsonl").read_text().strip().split("\n")
    assert len(lines) == 2
    assert "wrote 2 triplets" in capsys.readouterr().out


def test_synth_dataset_bad_paragraph_file(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{broken")
    code = main(["synth-dataset", "--paragraphs", str(bad), "--out-dir", str(tmp_path)])
    assert code == EXIT_VALIDATION


def test_console_script_is_installed():
    result = subprocess.run(
        [sys.executable, "-m", "albumstory.cli", "--help"],
        capture_output=True,
        text=True,
    )
    assert result.returncode == 0
    assert "ingest" in result.stdout
