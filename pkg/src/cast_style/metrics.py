"""Corpus metrics: BLEU, GEC-style GLEU, perplexity and classifier accuracy.

All BLEU/GLEU scores are on a 0-100 scale.
"""
from __future__ import annotations

import math
from collections import Counter
from typing import Sequence

import torch

BLEU_EPSILON = 0.1


def ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _check_lengths(*lists):
    sizes = {len(x) for x in lists}
    if len(sizes) != 1:
        raise ValueError(f"list lengths differ: {[len(x) for x in lists]}")
    if sizes == {0}:
        raise ValueError("need at least one sentence")


def bleu(hypotheses: Sequence[Sequence[str]], references: Sequence[Sequence[str]],
         max_order: int = 4, epsilon: float = BLEU_EPSILON) -> float:
    """Corpus BLEU with brevity penalty.

    Smoothing: a zero match count at order n >= 2 is replaced by ``epsilon``;
    zero unigram matches give 0. Orders with no hypothesis n-grams anywhere in
    the corpus drop out of the geometric mean.
    """
    _check_lengths(hypotheses, references)
    matches = [0] * max_order
    totals = [0] * max_order
    hyp_len = ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        hyp_len += len(hyp)
        ref_len += len(ref)
        for n in range(1, max_order + 1):
            h, r = ngrams(hyp, n), ngrams(ref, n)
            matches[n - 1] += sum((h & r).values())
            totals[n - 1] += sum(h.values())
    if hyp_len == 0 or matches[0] == 0:
        return 0.0
    log_precision = 0.0
    orders = 0
    for m, t in zip(matches, totals):
        if t == 0:
            continue
        log_precision += math.log((m if m > 0 else epsilon) / t)
        orders += 1
    brevity = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / hyp_len)
    return 100.0 * brevity * math.exp(log_precision / orders)


def _gleu_stats(source, hypothesis, reference, max_order):
    yield len(hypothesis)
    yield len(reference)
    for n in range(1, max_order + 1):
        h, s, r = ngrams(hypothesis, n), ngrams(source, n), ngrams(reference, n)
        # source n-grams the reference dropped
        s_only = Counter({g: c for g, c in s.items() if g not in r})
        yield max(sum((h & r).values()) - sum((h & s_only).values()), 0)
        yield max(len(hypothesis) + 1 - n, 0)


def gleu(sources: Sequence[Sequence[str]], hypotheses: Sequence[Sequence[str]],
         references: Sequence[Sequence[str]], max_order: int = 4) -> float:
    """GLEU for grammatical error correction (single reference per sentence).

    Per order n, the numerator counts hypothesis n-grams matching the
    reference minus those shared with the source but absent from the
    reference; statistics are summed over the corpus before scoring.
    """
    _check_lengths(sources, hypotheses, references)
    stats = [0] * (2 + 2 * max_order)
    for src, hyp, ref in zip(sources, hypotheses, references):
        for i, v in enumerate(_gleu_stats(src, hyp, ref, max_order)):
            stats[i] += v
    if any(v == 0 for v in stats):
        return 0.0
    c, r = stats[0], stats[1]
    log_precision = sum(math.log(stats[i] / stats[i + 1]) for i in range(2, len(stats), 2))
    return 100.0 * math.exp(min(0.0, 1.0 - r / c) + log_precision / max_order)


def perplexity(lm, hypotheses: Sequence[Sequence[int]]) -> float:
    """exp(total NLL / total tokens), EOS included."""
    if not hypotheses:
        raise ValueError("need at least one hypothesis")
    with torch.no_grad():
        nll, n = lm.token_nll(hypotheses)
    return math.exp(nll / n)


def classifier_accuracy(predictions: Sequence[int], expected: Sequence[int]) -> float:
    """Percent of predictions equal to the expected labels."""
    if len(predictions) != len(expected):
        raise ValueError("predictions and expected labels differ in length")
    if not expected:
        raise ValueError("no labels to score")
    return 100.0 * sum(int(p) == int(e) for p, e in zip(predictions, expected)) / len(expected)
