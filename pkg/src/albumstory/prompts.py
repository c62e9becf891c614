"""Prompt rendering and structured-reply parsing for the chat protocol.

Rendering fills the shipped template files (UTF-8 text with {{placeholder}}
markers) with album data; parsing turns imperfect chat replies back into
PairRecords, applying the documented JSON repairs and path restoration.
"""

from __future__ import annotations

import json
import re
from importlib import resources
from typing import Any, Mapping, Optional, Sequence, Union

from .backends.base import ChatMessage
from .jsontools import repair_json
from .model import PairRecord

TEMPLATE_IDS = (
    "p0",
    "p1",
    "p_r",
    "p_u",
    "m_detail",
    "m_coverage",
    "m_coherence",
    "synth_vivid",
    "synth_antonym",
)

RECORD_KEYS = ("initial_story", "refine_story")

# Keys the chat model is known to emit instead of the requested ones; values
# are accepted with a warning rather than failing the round.
_KEY_ALIASES = {
    "initial_story": ("initial story",),
    "refine_story": ("refined_story", "refine story"),
}

_PLACEHOLDER_RE = re.compile(r"\{\{([a-z0-9_]+)\}\}")


class ParseFailure(Exception):
    """A chat reply that cannot be turned into the requested structure."""

    KINDS = ("malformed_json", "count_mismatch", "path_mutation", "missing_key")

    def __init__(
        self,
        kind: str,
        detail: str,
        excerpt: str = "",
        expected: Optional[int] = None,
        found: Optional[int] = None,
    ):
        if kind not in self.KINDS:
            raise ValueError(f"unknown parse failure kind {kind!r}")
        if kind == "count_mismatch" and (expected is None or found is None):
            raise ValueError("count_mismatch requires expected and found counts")
        self.kind = kind
        self.detail = detail
        self.excerpt = excerpt[:200]
        self.expected = expected
        self.found = found
        super().__init__(f"[{kind}] {detail}")


class MetricFormatError(Exception):
    """A judge reply that does not match its announced output format."""


def load_template(
    template_id: str, overrides: Optional[Mapping[str, str]] = None
) -> str:
    if template_id not in TEMPLATE_IDS:
        raise ValueError(f"unknown template id {template_id!r}")
    if overrides and template_id in overrides:
        return overrides[template_id]
    path = resources.files("albumstory").joinpath(f"templates/{template_id}.txt")
    return path.read_text(encoding="utf-8")


def render_template(text: str, values: Mapping[str, str]) -> str:
    """Fill {{name}} markers; unknown or unused names are caller bugs."""
    wanted = set(_PLACEHOLDER_RE.findall(text))
    given = set(values)
    if wanted - given:
        raise ValueError(f"template placeholders missing values: {sorted(wanted - given)}")
    if given - wanted:
        raise ValueError(f"values without template placeholders: {sorted(given - wanted)}")

    def sub(match: re.Match[str]) -> str:
        return values[match.group(1)]

    return _PLACEHOLDER_RE.sub(sub, text)


def _records_json(records: Sequence[PairRecord]) -> str:
    return json.dumps([r.to_dict() for r in records], ensure_ascii=False)


def render_initial(
    records: Sequence[PairRecord],
    overrides: Optional[Mapping[str, str]] = None,
) -> list[ChatMessage]:
    """Two user turns: the story request over the caption records, then the
    instruction to merge the stories back into the record structure."""
    if not records:
        raise ValueError("render_initial requires at least one record")
    for record in records:
        if not record.caption:
            raise ValueError(f"record {record.img_path!r} is missing its caption")
    first = render_template(
        load_template("p0", overrides), {"records_json": _records_json(records)}
    )
    second = render_template(load_template("p1", overrides), {})
    return [ChatMessage("user", first), ChatMessage("user", second)]


def render_refine(
    records: Sequence[PairRecord],
    overrides: Optional[Mapping[str, str]] = None,
) -> list[ChatMessage]:
    if not records:
        raise ValueError("render_refine requires at least one record")
    for record in records:
        for key in ("caption", "initial_story", "refine_caption"):
            if not getattr(record, key):
                raise ValueError(f"record {record.img_path!r} is missing {key!r}")
    text = render_template(
        load_template("p_r", overrides), {"records_json": _records_json(records)}
    )
    return [ChatMessage("user", text)]


def render_ultimate(
    stories: Sequence[str],
    overrides: Optional[Mapping[str, str]] = None,
) -> list[ChatMessage]:
    if not stories:
        raise ValueError("render_ultimate requires at least one story")
    if any(not s.strip() for s in stories):
        raise ValueError("render_ultimate stories must be non-empty")
    text = render_template(
        load_template("p_u", overrides),
        {
            "stories_json": json.dumps(list(stories), ensure_ascii=False),
            "count": str(len(stories)),
        },
    )
    return [ChatMessage("user", text)]


def render_metric(
    kind: str,
    *,
    story: str,
    captions_group_1: Optional[Sequence[str]] = None,
    captions_group_2: Optional[Sequence[str]] = None,
    overrides: Optional[Mapping[str, str]] = None,
) -> list[ChatMessage]:
    if not story.strip():
        raise ValueError("metric prompts require a non-empty story")
    if kind == "detail":
        text = render_template(load_template("m_detail", overrides), {"story": story})
    elif kind == "coherence":
        text = render_template(load_template("m_coherence", overrides), {"story": story})
    elif kind == "coverage":
        if not captions_group_1 or not captions_group_2:
            raise ValueError("coverage requires both caption groups")
        text = render_template(
            load_template("m_coverage", overrides),
            {
                "story": story,
                "captions_group_1": json.dumps(list(captions_group_1), ensure_ascii=False),
                "captions_group_2": json.dumps(list(captions_group_2), ensure_ascii=False),
            },
        )
    else:
        raise ValueError(f"unknown metric kind {kind!r}")
    return [ChatMessage("user", text)]


def render_synth_vivid(
    caption: str, overrides: Optional[Mapping[str, str]] = None
) -> list[ChatMessage]:
    if not caption.strip():
        raise ValueError("caption must be non-empty")
    text = render_template(load_template("synth_vivid", overrides), {"caption": caption})
    return [ChatMessage("user", text)]


def render_synth_antonym(
    story: str, overrides: Optional[Mapping[str, str]] = None
) -> list[ChatMessage]:
    if not story.strip():
        raise ValueError("story must be non-empty")
    text = render_template(load_template("synth_antonym", overrides), {"story": story})
    return [ChatMessage("user", text)]


# --- reply parsing -----------------------------------------------------------

def _load_items(llm_text: str) -> tuple[Any, str]:
    repaired = repair_json(llm_text)
    try:
        return json.loads(repaired), repaired
    except json.JSONDecodeError as err:
        raise ParseFailure(
            "malformed_json", f"not valid JSON after repair: {err}", excerpt=repaired
        ) from None


def _record_value(item: Mapping[str, Any], key: str, warnings: list[str]) -> Any:
    if key in item:
        return item[key]
    for alias in _KEY_ALIASES.get(key, ()):
        if alias in item:
            warnings.append(f"accepted key {alias!r} as {key!r}")
            return item[alias]
    return None


def parse_pair_records(
    llm_text: str,
    expected_paths: Sequence[str],
    required_key: str,
) -> tuple[list[PairRecord], list[str]]:
    """Parse a structured chat reply into exactly one record per photo.

    The reply is reordered to expected_paths when its paths match uniquely;
    a mutated path at an unambiguous position is restored with a warning.
    Returns (records in expected order, warnings).
    """
    if not expected_paths:
        raise ValueError("expected_paths must be non-empty")
    if required_key not in RECORD_KEYS:
        raise ValueError(f"required_key must be one of {RECORD_KEYS}")

    data, repaired = _load_items(llm_text)
    if isinstance(data, dict):
        data = [data]
    if not isinstance(data, list) or not all(isinstance(x, dict) for x in data):
        raise ParseFailure(
            "malformed_json", "reply is not a JSON list of objects", excerpt=repaired
        )

    warnings: list[str] = []
    returned_paths = [item.get("img_path") for item in data]
    expected = list(expected_paths)

    if len(data) != len(expected):
        present = {p for p in returned_paths if isinstance(p, str)}
        if present and present.issubset(set(expected)):
            raise ParseFailure(
                "count_mismatch",
                f"expected {len(expected)} records, found {len(data)}",
                excerpt=repaired,
                expected=len(expected),
                found=len(data),
            )
        raise ParseFailure(
            "path_mutation",
            "record count differs and img_path values do not match the album",
            excerpt=repaired,
            expected=len(expected),
            found=len(data),
        )

    # Counts match. Align by unique paths when possible, else positionally.
    if (
        all(isinstance(p, str) for p in returned_paths)
        and sorted(returned_paths) == sorted(expected)
        and len(set(returned_paths)) == len(expected)
    ):
        by_path = {item["img_path"]: item for item in data}
        ordered = [by_path[path] for path in expected]
    else:
        ordered = list(data)
        for i, (item, path) in enumerate(zip(ordered, expected)):
            got = item.get("img_path")
            if got != path:
                warnings.append(
                    f"record {i}: restored img_path {got!r} -> {path!r}"
                )

    records: list[PairRecord] = []
    for i, (item, path) in enumerate(zip(ordered, expected)):
        value = _record_value(item, required_key, warnings)
        if not isinstance(value, str) or not value.strip():
            raise ParseFailure(
                "missing_key",
                f"record {i} ({path!r}) is missing a non-empty {required_key!r}",
                excerpt=repaired,
            )
        caption = item.get("caption")
        records.append(
            PairRecord(
                img_path=path,
                caption=caption if isinstance(caption, str) else "",
                **{required_key: value},
            )
        )
    return records, warnings


def parse_story_list(llm_text: str, expected_count: int) -> list[str]:
    """Parse the coherence-pass reply: a JSON array of story strings."""
    if expected_count < 1:
        raise ValueError("expected_count must be >= 1")
    data, repaired = _load_items(llm_text)
    if isinstance(data, dict):
        # Tolerate {"stories": [...]}-style wrapping with a single list value.
        lists = [v for v in data.values() if isinstance(v, list)]
        if len(lists) == 1:
            data = lists[0]
    if not isinstance(data, list):
        raise ParseFailure(
            "malformed_json", "reply is not a JSON array of stories", excerpt=repaired
        )
    if len(data) != expected_count:
        raise ParseFailure(
            "count_mismatch",
            f"expected {expected_count} stories, found {len(data)}",
            excerpt=repaired,
            expected=expected_count,
            found=len(data),
        )
    stories: list[str] = []
    for i, item in enumerate(data):
        if not isinstance(item, str) or not item.strip():
            raise ParseFailure(
                "missing_key", f"story {i} is not a non-empty string", excerpt=repaired
            )
        stories.append(item)
    return stories


_NUMBER = r"(-?[0-9]+(?:\.[0-9]+)?|-?\.[0-9]+)"

_METRIC_PATTERNS = {
    "detail": re.compile(r"total number of details\s*:\s*" + _NUMBER, re.IGNORECASE),
    # judges shorten the requested label often enough that both spellings count
    "coverage_g1": re.compile(
        r"(?:score of story coverage for )?caption group 1(?: score)?\s*:\s*" + _NUMBER,
        re.IGNORECASE,
    ),
    "coverage_g2": re.compile(
        r"(?:score of story coverage for )?caption group 2(?: score)?\s*:\s*" + _NUMBER,
        re.IGNORECASE,
    ),
    "coverage_avg": re.compile(r"average score\s*:\s*" + _NUMBER, re.IGNORECASE),
    "coherence": re.compile(r"coherence score\s*:\s*" + _NUMBER, re.IGNORECASE),
}


def _last_number(text: str, pattern_id: str) -> float:
    matches = _METRIC_PATTERNS[pattern_id].findall(text)
    if not matches:
        raise MetricFormatError(f"no {pattern_id!r} value found in reply")
    return float(matches[-1])


def _unit_interval(value: float, label: str) -> float:
    if not 0.0 <= value <= 1.0:
        raise MetricFormatError(f"{label} {value} outside [0, 1]")
    return value


def parse_metric_output(
    text: str, kind: str
) -> Union[int, float, tuple[float, float, float]]:
    """Extract the numeric result a judge was asked to print.

    Labels match case-insensitively and the last occurrence wins, since chat
    models often restate the format before answering.
    """
    if kind == "detail":
        value = _last_number(text, "detail")
        if value < 0 or value != int(value):
            raise MetricFormatError(f"detail count {value} is not a whole number >= 0")
        return int(value)
    if kind == "coverage":
        g1 = _unit_interval(_last_number(text, "coverage_g1"), "group 1 score")
        g2 = _unit_interval(_last_number(text, "coverage_g2"), "group 2 score")
        avg = _unit_interval(_last_number(text, "coverage_avg"), "average score")
        return (g1, g2, avg)
    if kind == "coherence":
        return _unit_interval(_last_number(text, "coherence"), "coherence score")
    raise ValueError(f"unknown metric kind {kind!r}")


def corrective_tip(failure: ParseFailure, noun: str = "records") -> str:
    """One-shot follow-up instruction appended after a failed parse."""
    if failure.kind == "count_mismatch":
        return (
            f"You returned {failure.found} {noun}; return exactly "
            f"{failure.expected} {noun}, one per input item, as pure JSON."
        )
    return (
        "Your previous reply could not be used. Return exactly the requested "
        "JSON structure with the same img_path values, and nothing else."
    )
