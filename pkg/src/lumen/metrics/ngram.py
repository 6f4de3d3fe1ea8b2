"""Word and character n-gram overlap metrics: the BLEU suite, GLEU, chrF."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

from .base import EvalPair, corpus_mean, ngram_counts, pooled_ngram_counts, overlap

BLEU_MAX_N = 4
GLEU_MAX_N = 4
CHRF_MAX_N = 6
CHRF_BETA = 2.0


@dataclass(frozen=True)
class BleuResult:
    b1: float
    b2: float
    b3: float
    b4: float
    bp: float
    precisions: tuple[float, float, float, float]
    candidate_len: int
    reference_len: int

    def score(self, n: int) -> float:
        return (self.b1, self.b2, self.b3, self.b4)[n - 1]


def _closest_ref_len(cand_len: int, refs) -> int:
    """Best-match reference length; ties prefer the shorter reference."""
    return min((abs(len(r) - cand_len), len(r)) for r in refs)[1]


def bleu_suite(corpus: list[EvalPair]) -> BleuResult:
    """Corpus-level BLEU-1..4 with per-reference clipped counts and the
    brevity penalty min(1, exp(1 - r/c)).

    No smoothing: a zero precision zeroes every order that includes it.
    Orders for which the corpus has no candidate n-grams at all are skipped
    (effective order), so short identical sentences still score 1.0 at
    every order."""
    if not corpus:
        raise ValueError("empty corpus")
    matched = [0] * BLEU_MAX_N
    total = [0] * BLEU_MAX_N
    cand_len = 0
    ref_len = 0
    for pair in corpus:
        cand_len += len(pair.candidate)
        ref_len += _closest_ref_len(len(pair.candidate), pair.references)
        for n in range(1, BLEU_MAX_N + 1):
            counts = ngram_counts(pair.candidate, n)
            if not counts:
                continue
            clip: Counter = Counter()
            for ref in pair.references:
                rcounts = ngram_counts(ref, n)
                for g in counts:
                    clip[g] = max(clip[g], rcounts.get(g, 0))
            matched[n - 1] += sum(min(c, clip[g]) for g, c in counts.items())
            total[n - 1] += sum(counts.values())
    precisions = tuple(m / t if t else 0.0 for m, t in zip(matched, total))
    if cand_len == 0:
        bp = 0.0
    else:
        bp = min(1.0, math.exp(1.0 - ref_len / cand_len))
    scores = []
    for n in range(1, BLEU_MAX_N + 1):
        ps = [p for p, t in zip(precisions[:n], total[:n]) if t > 0]
        if not ps or any(p == 0.0 for p in ps):
            scores.append(0.0)
        else:
            scores.append(bp * math.exp(math.fsum(math.log(p) for p in ps) / len(ps)))
    return BleuResult(*scores, bp=bp, precisions=precisions,
                      candidate_len=cand_len, reference_len=ref_len)


def unclipped_precisions(corpus: list[EvalPair]) -> tuple[float, ...]:
    """N-gram precision without reference clipping (diagnostic bound)."""
    matched = [0] * BLEU_MAX_N
    total = [0] * BLEU_MAX_N
    for pair in corpus:
        for n in range(1, BLEU_MAX_N + 1):
            counts = ngram_counts(pair.candidate, n)
            present = set()
            for ref in pair.references:
                present.update(ngram_counts(ref, n))
            matched[n - 1] += sum(c for g, c in counts.items() if g in present)
            total[n - 1] += sum(counts.values())
    return tuple(m / t if t else 0.0 for m, t in zip(matched, total))


def gleu(pair: EvalPair) -> float:
    """min(precision, recall) of the pooled 1..4-gram multiset overlap;
    the best reference wins."""
    cand = pooled_ngram_counts(pair.candidate, GLEU_MAX_N)
    best = 0.0
    for ref in pair.references:
        rcounts = pooled_ngram_counts(ref, GLEU_MAX_N)
        inter = overlap(cand, rcounts)
        if inter == 0:
            continue
        precision = inter / sum(cand.values())
        recall = inter / sum(rcounts.values())
        best = max(best, min(precision, recall))
    return best


def gleu_corpus(corpus: list[EvalPair]) -> float:
    return corpus_mean([gleu(p) for p in corpus])


def _char_ngrams(tokens, n: int) -> Counter:
    text = "".join(tokens)  # whitespace never enters the n-grams
    return Counter(text[i : i + n] for i in range(len(text) - n + 1))


def chrf(pair: EvalPair) -> float:
    """Character n-gram F-score, n = 1..6, recall-weighted (beta = 2).

    Precision/recall are averaged over the orders where both sides have
    n-grams; F = (1 + beta^2) P R / (beta^2 P + R).
    """
    best = 0.0
    for ref in pair.references:
        p_sum = r_sum = 0.0
        effective = 0
        for n in range(1, CHRF_MAX_N + 1):
            cg = _char_ngrams(pair.candidate, n)
            rg = _char_ngrams(ref, n)
            if not cg or not rg:
                continue
            inter = overlap(cg, rg)
            p_sum += inter / sum(cg.values())
            r_sum += inter / sum(rg.values())
            effective += 1
        if effective == 0:
            continue
        p = p_sum / effective
        r = r_sum / effective
        if p + r > 0:
            b2 = CHRF_BETA**2
            best = max(best, (1 + b2) * p * r / (b2 * p + r))
    return best


def chrf_corpus(corpus: list[EvalPair]) -> float:
    return corpus_mean([chrf(p) for p in corpus])
