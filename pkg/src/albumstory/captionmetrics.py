"""Corpus n-gram metrics for caption quality: BLEU-1/4, ROUGE-L, CIDEr.

All scores are reported on a 0-100 scale. Pairing is positional: candidate i
is scored against reference i (one reference per candidate).
"""

from __future__ import annotations

import math
from collections import Counter
from typing import Sequence

_ROUGE_BETA = 1.2
_CIDER_SIGMA = 6.0
_CIDER_MAX_N = 4


def _tokens(text: str) -> list[str]:
    return text.lower().split()


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _check_corpus(candidates: Sequence[str], references: Sequence[str]) -> None:
    if len(candidates) != len(references):
        raise ValueError(
            f"{len(candidates)} candidates vs {len(references)} references"
        )
    if not candidates:
        raise ValueError("need at least one candidate/reference pair")


def bleu_scores(
    candidates: Sequence[str], references: Sequence[str]
) -> tuple[float, float]:
    """Corpus BLEU-1 and BLEU-4 with the standard brevity penalty."""
    _check_corpus(candidates, references)
    clipped = [0] * (_CIDER_MAX_N + 1)
    totals = [0] * (_CIDER_MAX_N + 1)
    cand_len = 0
    ref_len = 0
    for cand, ref in zip(candidates, references):
        cand_tokens = _tokens(cand)
        ref_tokens = _tokens(ref)
        cand_len += len(cand_tokens)
        ref_len += len(ref_tokens)
        for n in range(1, _CIDER_MAX_N + 1):
            cand_grams = _ngrams(cand_tokens, n)
            ref_grams = _ngrams(ref_tokens, n)
            clipped[n] += sum(
                min(count, ref_grams[gram]) for gram, count in cand_grams.items()
            )
            totals[n] += max(0, len(cand_tokens) - n + 1)

    if cand_len == 0:
        return 0.0, 0.0
    brevity = 1.0 if cand_len > ref_len else math.exp(1.0 - ref_len / cand_len)

    precisions = [
        clipped[n] / totals[n] if totals[n] > 0 else 0.0
        for n in range(1, _CIDER_MAX_N + 1)
    ]

    def geo_mean(upto: int) -> float:
        parts = precisions[:upto]
        if any(p == 0.0 for p in parts):
            return 0.0
        return math.exp(sum(math.log(p) for p in parts) / upto)

    return 100.0 * brevity * geo_mean(1), 100.0 * brevity * geo_mean(4)


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for token in a:
        row = [0] * (len(b) + 1)
        for j, other in enumerate(b, start=1):
            if token == other:
                row[j] = prev[j - 1] + 1
            else:
                row[j] = max(prev[j], row[j - 1])
        prev = row
    return prev[-1]


def rouge_l(candidates: Sequence[str], references: Sequence[str]) -> float:
    """Mean LCS-based F-measure (recall-weighted, beta = 1.2)."""
    _check_corpus(candidates, references)
    beta_sq = _ROUGE_BETA**2
    scores = []
    for cand, ref in zip(candidates, references):
        cand_tokens = _tokens(cand)
        ref_tokens = _tokens(ref)
        lcs = _lcs_length(cand_tokens, ref_tokens)
        if lcs == 0:
            scores.append(0.0)
            continue
        precision = lcs / len(cand_tokens)
        recall = lcs / len(ref_tokens)
        scores.append(
            (1 + beta_sq) * precision * recall / (recall + beta_sq * precision)
        )
    return 100.0 * sum(scores) / len(scores)


def cider(candidates: Sequence[str], references: Sequence[str]) -> float:
    """Consensus tf-idf similarity over n in 1..4 with a Gaussian length
    penalty; document frequencies come from the reference side of this run."""
    _check_corpus(candidates, references)
    ref_tokens = [_tokens(ref) for ref in references]
    doc_count = len(references)
    doc_freq: list[Counter] = [Counter() for _ in range(_CIDER_MAX_N + 1)]
    for tokens in ref_tokens:
        for n in range(1, _CIDER_MAX_N + 1):
            for gram in set(_ngrams(tokens, n)):
                doc_freq[n][gram] += 1

    def tfidf(grams: Counter, n: int) -> dict:
        total = sum(grams.values())
        if total == 0:
            return {}
        return {
            gram: (count / total) * math.log(doc_count / doc_freq[n][gram])
            for gram, count in grams.items()
            if doc_freq[n][gram] > 0
        }

    scores = []
    for cand, tokens_ref in zip(candidates, ref_tokens):
        tokens_cand = _tokens(cand)
        per_n = []
        for n in range(1, _CIDER_MAX_N + 1):
            vec_c = tfidf(_ngrams(tokens_cand, n), n)
            vec_r = tfidf(_ngrams(tokens_ref, n), n)
            norm_c = math.sqrt(sum(v * v for v in vec_c.values()))
            norm_r = math.sqrt(sum(v * v for v in vec_r.values()))
            if norm_c == 0.0 or norm_r == 0.0:
                per_n.append(0.0)
                continue
            # Candidate counts are clipped by the reference (consensus style).
            dot = sum(min(v, vec_r[g]) * vec_r[g] for g, v in vec_c.items() if g in vec_r)
            per_n.append(dot / (norm_c * norm_r))
        delta = len(tokens_cand) - len(tokens_ref)
        penalty = math.exp(-(delta**2) / (2 * _CIDER_SIGMA**2))
        scores.append(penalty * sum(per_n) / _CIDER_MAX_N)
    return 100.0 * sum(scores) / len(scores)


def caption_metrics(
    candidates: Sequence[str], references: Sequence[str]
) -> dict[str, float]:
    """All four scores for a positionally paired corpus, on a 0-100 scale."""
    bleu1, bleu4 = bleu_scores(candidates, references)
    return {
        "bleu1": bleu1,
        "bleu4": bleu4,
        "rouge_l": rouge_l(candidates, references),
        "cider": cider(candidates, references),
    }
