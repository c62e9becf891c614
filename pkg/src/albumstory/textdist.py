"""Character-level edit distance and the edit-ratio convergence rule."""

from __future__ import annotations

import numpy as np


def levenshtein(a: str, b: str) -> int:
    """Exact character-level Levenshtein distance between two strings.

    Row-sweep dynamic program; the sequential insertion recurrence is folded
    into a running-minimum pass so each row is a vector operation.
    """
    if a == b:
        return 0
    n, m = len(a), len(b)
    if n == 0:
        return m
    if m == 0:
        return n
    # utf-32 view: one code point per uint32, matching str indexing.
    b_codes = np.frombuffer(b.encode("utf-32-le"), dtype=np.uint32)
    offsets = np.arange(m + 1, dtype=np.int64)
    prev = offsets.copy()
    row = np.empty(m + 1, dtype=np.int64)
    for i, ch in enumerate(a, start=1):
        substitute = prev[:-1] + (b_codes != ord(ch))
        row[0] = i
        row[1:] = np.minimum(prev[1:] + 1, substitute)
        # insertion chains: row[j] = min_{k<=j} row[k] + (j - k)
        np.minimum.accumulate(row - offsets, out=row)
        row += offsets
        prev, row = row, prev
    return int(prev[-1])


def edit_ratio(prev_text: str, next_text: str) -> float:
    """Levenshtein distance normalized by the NEW text's character length."""
    if len(next_text) == 0:
        raise ValueError("next text must be non-empty")
    return levenshtein(prev_text, next_text) / len(next_text)


def has_converged(ratio: float, epsilon: float) -> bool:
    """Strict comparison: the iteration stops only when the ratio falls below
    the threshold, never at equality."""
    return ratio < epsilon
