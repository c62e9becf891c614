"""Edit distance against the DP oracle plus metric-space properties."""
from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from albumstory.textdist import edit_ratio, has_converged, levenshtein

from oracles import levenshtein_dp

TEXT = st.text(
    alphabet=st.characters(codec="utf-8", exclude_categories=("Cs",)), max_size=40
)


def test_known_distances():
    assert levenshtein("kitten", "sitting") == 3
    assert levenshtein("", "") == 0
    assert levenshtein("", "abc") == 3
    assert levenshtein("abc", "abc") == 0
    assert levenshtein("flaw", "lawn") == 2


def test_unicode_counts_characters_not_bytes():
    # multi-byte characters are single edits
    assert levenshtein("café", "cafe") == 1
    assert levenshtein("日本語", "日本") == 1


@given(TEXT, TEXT)
def test_matches_dp_oracle(a, b):
    assert levenshtein(a, b) == levenshtein_dp(a, b)


@given(TEXT, TEXT)
def test_symmetry_and_bounds(a, b):
    d = levenshtein(a, b)
    assert d == levenshtein(b, a)
    assert abs(len(a) - len(b)) <= d <= max(len(a), len(b))


@given(TEXT, TEXT, TEXT)
def test_triangle_inequality(a, b, c):
    assert levenshtein(a, c) <= levenshtein(a, b) + levenshtein(b, c)


def test_edit_ratio_normalizes_by_new_text():
    # distance 3 over the 7-character replacement
    assert edit_ratio("kitten", "sitting") == pytest.approx(3 / 7)
    assert edit_ratio("same", "same") == 0.0
    with pytest.raises(ValueError):
        edit_ratio("old", "")


def test_convergence_is_strictly_below_epsilon():
    assert not has_converged(0.2, 0.2)
    assert has_converged(0.19999, 0.2)
    assert not has_converged(0.21, 0.2)
    assert has_converged(0.0, 0.2)
