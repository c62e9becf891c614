"""Story evaluation: exact-EMD alignment, LLM-judge metrics, report bundles.

The EMD side is fully offline-computable (embeddings in, score out); the
judge side needs a chat backend and degrades to "skipped" per metric when a
reply defies its format twice.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional, Sequence

import numpy as np

from .backends.base import ChatBackend, DecodingParams, Embedder, EmbeddingVector
from .model import IterationTrace
from .prompts import MetricFormatError, parse_metric_output, render_metric
from .transport import solve_transport, uniform_problem

STAGES = ("captions", "initial", "refined", "ultimate")
JUDGE_METRICS = ("detail", "coverage", "coherence")

# Tokens that end with '.' without ending a sentence.
_ABBREVIATIONS = frozenset(
    {
        "mr.", "mrs.", "ms.", "dr.", "prof.", "st.", "no.", "vs.",
        "e.g.", "i.e.", "etc.", "fig.", "jan.", "feb.", "aug.", "oct.",
    }
)

_SENTENCE_END_RE = re.compile(r"[.!?]+(?=\s|$)")


def split_sentences(text: str) -> list[str]:
    """Sentences split on ./!/? followed by whitespace or end of text,
    keeping the terminal punctuation and skipping common abbreviations."""
    if not text.strip():
        raise ValueError("cannot split empty text into sentences")
    sentences: list[str] = []
    start = 0
    for match in _SENTENCE_END_RE.finditer(text):
        end = match.end()
        last_word = text[start:end].rsplit(None, 1)[-1].lower()
        if last_word in _ABBREVIATIONS:
            continue
        fragment = text[start:end].strip()
        if fragment:
            sentences.append(fragment)
        start = end
    tail = text[start:].strip()
    if tail:
        sentences.append(tail)
    return sentences


def cosine_cost(
    u: EmbeddingVector, v: EmbeddingVector, *, raw_similarity: bool = False
) -> float:
    """Transport cost between unit embeddings: 1 - <u, v>, in [0, 2].

    raw_similarity returns the inner product itself (an analysis mode where
    larger transported mass is NOT better; kept out of the reported score).
    """
    if u.dim != v.dim:
        raise ValueError(f"embedding dims differ: {u.dim} != {v.dim}")
    inner = float(np.dot(u.as_array(), v.as_array()))
    if raw_similarity:
        return inner
    return float(np.clip(1.0 - inner, 0.0, 2.0))


def emd_score(
    images: Sequence[bytes],
    story_text: str,
    embedder: Embedder,
    *,
    sentences: Optional[Sequence[str]] = None,
    raw_similarity: bool = False,
) -> float:
    """100 x the minimal transport cost between uniform image mass and
    uniform sentence mass under the cosine cost."""
    if not images:
        raise ValueError("need at least one image")
    parts = list(sentences) if sentences is not None else split_sentences(story_text)
    if not parts:
        raise ValueError("need at least one sentence")
    image_vecs = [embedder.embed_image(img) for img in images]
    text_vecs = [embedder.embed_text(s) for s in parts]
    cost = np.array(
        [
            [cosine_cost(u, v, raw_similarity=raw_similarity) for v in text_vecs]
            for u in image_vecs
        ]
    )
    if raw_similarity:
        # Similarities can be negative; shift into valid cost range for the
        # solver and shift back (uniform marginals make the shift exact).
        shift = min(0.0, float(cost.min()))
        plan = solve_transport(uniform_problem(cost - shift))
        return 100.0 * (plan.total_cost + shift)
    plan = solve_transport(uniform_problem(cost))
    return 100.0 * plan.total_cost


# --- LLM judges ---------------------------------------------------------------

def _judged_reply(
    chat: ChatBackend,
    messages: list,
    params: DecodingParams,
    kind: str,
) -> Any:
    """One retry with the identical prompt before giving up on the format."""
    last_error: Optional[MetricFormatError] = None
    for _ in range(2):
        reply = chat.chat(messages, params)
        try:
            return parse_metric_output(reply, kind)
        except MetricFormatError as err:
            last_error = err
    raise last_error  # type: ignore[misc]


def judge_detail(
    story_text: str,
    chat: ChatBackend,
    params: DecodingParams,
    overrides: Optional[Mapping[str, str]] = None,
) -> int:
    messages = render_metric("detail", story=story_text, overrides=overrides)
    return _judged_reply(chat, messages, params, "detail")


def judge_coverage(
    story_text: str,
    captions_initial: Sequence[str],
    captions_refined: Sequence[str],
    chat: ChatBackend,
    params: DecodingParams,
    overrides: Optional[Mapping[str, str]] = None,
) -> tuple[float, float, float]:
    messages = render_metric(
        "coverage",
        story=story_text,
        captions_group_1=captions_initial,
        captions_group_2=captions_refined,
        overrides=overrides,
    )
    return _judged_reply(chat, messages, params, "coverage")


def judge_coherence(
    story_text: str,
    chat: ChatBackend,
    params: DecodingParams,
    overrides: Optional[Mapping[str, str]] = None,
) -> float:
    messages = render_metric("coherence", story=story_text, overrides=overrides)
    return _judged_reply(chat, messages, params, "coherence")


# --- per-album evaluation ------------------------------------------------------

@dataclass(frozen=True)
class EvalReport:
    """Metric bundle for one album at one story stage; missing metrics are
    named in ``skipped`` rather than silently absent."""

    album_id: str
    stage: str
    sentence_count: int
    emd: Optional[float] = None
    detail: Optional[int] = None
    coverage: Optional[tuple[float, float, float]] = None
    coherence: Optional[float] = None
    backends: Mapping[str, str] = field(default_factory=dict)
    skipped: tuple[str, ...] = ()
    warnings: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.stage not in STAGES:
            raise ValueError(f"unknown stage {self.stage!r}")
        object.__setattr__(self, "backends", dict(self.backends))
        object.__setattr__(self, "skipped", tuple(self.skipped))
        object.__setattr__(self, "warnings", tuple(self.warnings))

    def to_dict(self) -> dict[str, Any]:
        return {
            "album_id": self.album_id,
            "stage": self.stage,
            "sentence_count": self.sentence_count,
            "emd": self.emd,
            "detail": self.detail,
            "coverage": list(self.coverage) if self.coverage else None,
            "coherence": self.coherence,
            "backends": dict(self.backends),
            "skipped": list(self.skipped),
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "EvalReport":
        coverage = data.get("coverage")
        return cls(
            album_id=data["album_id"],
            stage=data["stage"],
            sentence_count=int(data["sentence_count"]),
            emd=data.get("emd"),
            detail=data.get("detail"),
            coverage=tuple(coverage) if coverage else None,
            coherence=data.get("coherence"),
            backends=data.get("backends", {}),
            skipped=tuple(data.get("skipped", ())),
            warnings=tuple(data.get("warnings", ())),
        )


def trace_stages(trace: IterationTrace) -> list[tuple[str, list[str], str]]:
    """(stage, sentences, story_text) for every stage the trace reached.

    The captions stage treats each round-0 caption as one sentence, so the
    baseline row is comparable without inventing a story for it.
    """
    stages: list[tuple[str, list[str], str]] = []
    if not trace.rounds:
        return stages
    base_texts = [c.text for c in trace.rounds[0].captions]
    stages.append(("captions", base_texts, "\n".join(base_texts)))
    initial = trace.rounds[0].story
    stages.append(("initial", split_sentences(initial.text), initial.text))
    refined = [r for r in trace.rounds if r.t >= 1]
    if refined:
        story = refined[-1].story
        stages.append(("refined", split_sentences(story.text), story.text))
    if trace.ultimate_story is not None:
        story = trace.ultimate_story
        stages.append(("ultimate", split_sentences(story.text), story.text))
    return stages


def evaluate_album(
    trace: IterationTrace,
    images: Sequence[bytes],
    embedder: Optional[Embedder],
    chat: Optional[ChatBackend],
    params: DecodingParams,
    *,
    metrics: Sequence[str] = ("emd",) + JUDGE_METRICS,
    offline: bool = False,
    backend_ids: Optional[Mapping[str, str]] = None,
    overrides: Optional[Mapping[str, str]] = None,
) -> list[EvalReport]:
    """One EvalReport per stage present in the trace."""
    wanted = set(metrics)
    unknown = wanted - {"emd", *JUDGE_METRICS}
    if unknown:
        raise ValueError(f"unknown metrics: {sorted(unknown)}")
    if not trace.rounds:
        raise ValueError("trace has no completed rounds to evaluate")

    captions_initial = [c.text for c in trace.rounds[0].captions]
    captions_refined = [c.text for c in trace.rounds[-1].captions]
    reports = []
    for stage, sentences, story_text in trace_stages(trace):
        emd = None
        detail = None
        coverage = None
        coherence = None
        skipped: list[str] = []
        warnings: list[str] = []

        if "emd" in wanted:
            if embedder is None:
                skipped.append("emd")
            else:
                emd = emd_score(images, story_text, embedder, sentences=sentences)

        judges_wanted = [m for m in JUDGE_METRICS if m in wanted]
        if judges_wanted and (offline or chat is None):
            skipped.extend(judges_wanted)
        else:
            for metric in judges_wanted:
                try:
                    if metric == "detail":
                        detail = judge_detail(story_text, chat, params, overrides)
                    elif metric == "coverage":
                        coverage = judge_coverage(
                            story_text,
                            captions_initial,
                            captions_refined,
                            chat,
                            params,
                            overrides,
                        )
                    else:
                        coherence = judge_coherence(story_text, chat, params, overrides)
                except MetricFormatError as err:
                    skipped.append(metric)
                    warnings.append(f"{metric} skipped: {err}")

        reports.append(
            EvalReport(
                album_id=trace.album_id,
                stage=stage,
                sentence_count=len(sentences),
                emd=emd,
                detail=detail,
                coverage=coverage,
                coherence=coherence,
                backends=dict(backend_ids or {}),
                skipped=tuple(skipped),
                warnings=tuple(warnings),
            )
        )
    return reports


# --- aggregation ---------------------------------------------------------------

def aggregate_reports(reports: Sequence[EvalReport]) -> dict[str, dict[str, float]]:
    """Per-stage means over albums; absent metrics are ignored per column."""
    by_stage: dict[str, list[EvalReport]] = {stage: [] for stage in STAGES}
    for report in reports:
        by_stage[report.stage].append(report)

    def mean(values: list[float]) -> Optional[float]:
        return sum(values) / len(values) if values else None

    table: dict[str, dict[str, float]] = {}
    for stage, rows in by_stage.items():
        if not rows:
            continue
        table[stage] = {
            "albums": len(rows),
            "sentence_count": mean([r.sentence_count for r in rows]),
            "emd": mean([r.emd for r in rows if r.emd is not None]),
            "detail": mean([float(r.detail) for r in rows if r.detail is not None]),
            "coverage": mean([r.coverage[2] for r in rows if r.coverage is not None]),
            "coherence": mean([r.coherence for r in rows if r.coherence is not None]),
        }
    return table


_STAGE_LABELS = {
    "captions": "Captions",
    "initial": "Initial Story",
    "refined": "Refined Story",
    "ultimate": "Ultimate Story",
}


def format_table(aggregate: Mapping[str, Mapping[str, Any]]) -> str:
    """Aligned plain-text comparison table, one row per stage."""
    headers = ("Method", "#Sentence", "EMD", "Detail", "Coverage", "Coherence")
    rows = [headers]
    for stage in STAGES:
        stats = aggregate.get(stage)
        if not stats:
            continue

        def fmt(key: str, digits: int = 2) -> str:
            value = stats.get(key)
            return "-" if value is None else f"{value:.{digits}f}"

        rows.append(
            (
                _STAGE_LABELS[stage],
                fmt("sentence_count"),
                fmt("emd"),
                fmt("detail"),
                fmt("coverage"),
                fmt("coherence"),
            )
        )
    widths = [max(len(row[i]) for row in rows) for i in range(len(headers))]
    lines = []
    for row in rows:
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip())
    return "\n".join(lines)


def trend_diagnostics(reports: Sequence[EvalReport]) -> list[str]:
    """Soft qualitative checks across stages, never a gate.

    Flags whether detail grows strictly through the stage sequence and the
    ultimate story aligns better (lower EMD) than the initial one, over the
    albums that carry the needed values; requires three albums to conclude.
    """
    per_album: dict[str, dict[str, EvalReport]] = {}
    for report in reports:
        per_album.setdefault(report.album_id, {})[report.stage] = report

    detail_ok = []
    emd_ok = []
    for album_id, stages in sorted(per_album.items()):
        details = [
            stages[s].detail
            for s in STAGES
            if s in stages and stages[s].detail is not None
        ]
        if len(details) >= 2:
            detail_ok.append(all(a < b for a, b in zip(details, details[1:])))
        if (
            "initial" in stages
            and "ultimate" in stages
            and stages["initial"].emd is not None
            and stages["ultimate"].emd is not None
        ):
            emd_ok.append(stages["ultimate"].emd < stages["initial"].emd)

    lines = []
    for name, outcomes in (
        ("detail increases strictly across stages", detail_ok),
        ("ultimate EMD below initial EMD", emd_ok),
    ):
        if len(outcomes) < 3:
            lines.append(
                f"[diagnostic] {name}: insufficient albums "
                f"({len(outcomes)} of 3 required)"
            )
        else:
            passed = sum(outcomes)
            verdict = "holds" if passed == len(outcomes) else "mixed"
            lines.append(
                f"[diagnostic] {name}: {verdict} ({passed}/{len(outcomes)} albums)"
            )
    return lines
