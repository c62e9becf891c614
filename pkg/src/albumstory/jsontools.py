"""Best-effort textual repair of JSON embedded in chat-model replies.

The repair is a pure text transform applied before parsing, in a fixed
order: code fences, surrounding prose, trailing commas, smart quotes.
Each pass is idempotent, so repair(repair(x)) == repair(x).
"""

from __future__ import annotations

import re
from typing import Optional

_FENCE_RE = re.compile(r"```[A-Za-z0-9_-]*\r?\n?(.*?)```", re.DOTALL)

_SMART_QUOTES = {
    "“": '"',  # “
    "”": '"',  # ”
    "„": '"',  # „
    "‘": "'",  # ‘
    "’": "'",  # ’
    "‚": "'",  # ‚
}


def strip_code_fences(text: str) -> str:
    """Replace the first fenced block that looks like JSON with its body."""
    for match in _FENCE_RE.finditer(text):
        body = match.group(1)
        if "[" in body or "{" in body:
            return body.strip()
    return text


def find_json_span(text: str, start: int = 0) -> Optional[tuple[int, int]]:
    """(open, close+1) indices of the first balanced [..]/{..} from start.

    The scan is string-aware: brackets inside double-quoted strings do not
    count, and backslash escapes are honored.
    """
    opener = None
    for i in range(start, len(text)):
        if text[i] in "[{":
            opener = i
            break
    if opener is None:
        return None
    depth = 0
    in_string = False
    escaped = False
    for j in range(opener, len(text)):
        ch = text[j]
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            in_string = True
        elif ch in "[{":
            depth += 1
        elif ch in "]}":
            depth -= 1
            if depth == 0:
                return opener, j + 1
    return None


def extract_json_payload(text: str) -> str:
    """Strip prose before the first bracket and after its matching close.

    Unbalanced payloads keep everything from the opener on (the later parse
    will report them properly).
    """
    span = find_json_span(text)
    if span is not None:
        return text[span[0] : span[1]]
    for i, ch in enumerate(text):
        if ch in "[{":
            return text[i:]
    return text


def remove_trailing_commas(text: str) -> str:
    """Drop commas that directly precede a closing bracket (string-aware)."""
    out: list[str] = []
    in_string = False
    escaped = False
    i = 0
    while i < len(text):
        ch = text[i]
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            out.append(ch)
            i += 1
            continue
        if ch == '"':
            in_string = True
            out.append(ch)
            i += 1
            continue
        if ch == ",":
            j = i + 1
            while j < len(text) and text[j] in " \t\r\n":
                j += 1
            if j < len(text) and text[j] in "]}":
                i += 1  # skip the comma; whitespace is kept as-is
                continue
        out.append(ch)
        i += 1
    return "".join(out)


def normalize_smart_quotes(text: str) -> str:
    for smart, straight in _SMART_QUOTES.items():
        text = text.replace(smart, straight)
    return text


def repair_json(text: str) -> str:
    """Apply all repair passes in order; parsing happens separately."""
    text = strip_code_fences(text)
    text = extract_json_payload(text)
    text = remove_trailing_commas(text)
    text = normalize_smart_quotes(text)
    return text.strip()
