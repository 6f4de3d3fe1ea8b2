"""Consensus n-gram metric over a reference corpus (CIDEr-D form).

Term weights are tf * idf with idf = log(N) - log(max(1, df)), where df
counts reference *sets* containing the n-gram and N is the corpus size.
Per order n (1..4) the candidate/reference vectors are compared by cosine
with candidate counts clipped to the reference counts, a Gaussian penalty
exp(-(len_c - len_r)^2 / (2 sigma^2)) on the length difference, averaging
over orders and references, and a x10 scale.

Lengths follow the reference implementation's convention of counting
bigrams, which equals token length minus one for non-empty sequences.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict

from .base import EvalPair, corpus_mean, ngram_counts

CIDER_MAX_N = 4
CIDER_SIGMA = 6.0
CIDER_SCALE = 10.0


def _all_ngrams(tokens) -> Counter:
    pooled: Counter = Counter()
    for n in range(1, CIDER_MAX_N + 1):
        pooled.update(ngram_counts(tokens, n))
    return pooled


def _doc_frequencies(corpus: list[EvalPair]) -> dict[tuple, int]:
    df: dict[tuple, int] = defaultdict(int)
    for pair in corpus:
        seen = set()
        for ref in pair.references:
            seen.update(_all_ngrams(ref))
        for g in seen:
            df[g] += 1
    return df


def _tfidf_vector(counts: Counter, df: dict, log_n: float):
    """Per-order weight dicts, their norms, and the bigram-count length."""
    vec = [dict() for _ in range(CIDER_MAX_N)]
    norm = [0.0] * CIDER_MAX_N
    length = 0
    for g, tf in counts.items():
        idf = log_n - math.log(max(1.0, df.get(g, 0)))
        k = len(g) - 1
        w = tf * idf
        vec[k][g] = w
        norm[k] += w * w
        if k == 1:
            length += tf
    return vec, [math.sqrt(x) for x in norm], length


def _similarity(cvec, cnorm, clen, rvec, rnorm, rlen) -> list[float]:
    delta = float(clen - rlen)
    penalty = math.exp(-(delta**2) / (2.0 * CIDER_SIGMA**2))
    sims = []
    for k in range(CIDER_MAX_N):
        dot = 0.0
        for g, w in cvec[k].items():
            rw = rvec[k].get(g, 0.0)
            dot += min(w, rw) * rw  # clip candidate weight at the reference's
        if cnorm[k] != 0.0 and rnorm[k] != 0.0:
            dot /= cnorm[k] * rnorm[k]
        sims.append(dot * penalty)
    return sims


def cider(corpus: list[EvalPair]) -> float:
    """Corpus score: mean over pairs of the per-pair consensus score."""
    return corpus_mean(cider_scores(corpus))


def cider_scores(corpus: list[EvalPair]) -> list[float]:
    if not corpus:
        raise ValueError("empty corpus")
    df = _doc_frequencies(corpus)
    log_n = math.log(len(corpus))
    scores = []
    for pair in corpus:
        cvec, cnorm, clen = _tfidf_vector(_all_ngrams(pair.candidate), df, log_n)
        acc = [0.0] * CIDER_MAX_N
        for ref in pair.references:
            rvec, rnorm, rlen = _tfidf_vector(_all_ngrams(ref), df, log_n)
            for k, s in enumerate(_similarity(cvec, cnorm, clen, rvec, rnorm, rlen)):
                acc[k] += s
        per_n = math.fsum(acc) / CIDER_MAX_N
        scores.append(per_n / len(pair.references) * CIDER_SCALE)
    return scores
