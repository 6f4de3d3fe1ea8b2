"""Embedding-backed metrics and the provider contract behind them.

Providers map token types to fixed-dimension vectors and sentences to one
vector, deterministically. The default provider hashes each token string
into a seeded unit vector; an adapter exposes a trained model's own token
embedding table through the same contract.
"""

from __future__ import annotations

import hashlib
import math
from collections import defaultdict

import numpy as np

from .base import EvalPair, corpus_mean


class HashEmbeddingProvider:
    """Deterministic pseudo-random unit vector per token type."""

    def __init__(self, dim: int = 64, seed: int = 0):
        self.dim = dim
        self.seed = seed
        self._cache: dict[str, np.ndarray] = {}

    def token_vector(self, token: str) -> np.ndarray:
        vec = self._cache.get(token)
        if vec is None:
            digest = hashlib.sha256(f"{self.seed}:{token}".encode("utf-8")).digest()
            rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
            vec = rng.standard_normal(self.dim)
            vec /= np.linalg.norm(vec)
            self._cache[token] = vec
        return vec

    def token_vectors(self, tokens) -> np.ndarray:
        if not tokens:
            return np.zeros((0, self.dim))
        return np.stack([self.token_vector(t) for t in tokens])

    def sentence_vector(self, tokens) -> np.ndarray:
        if not tokens:
            return np.zeros(self.dim)
        return self.token_vectors(tokens).mean(axis=0)


class ModelEmbeddingProvider:
    """Adapter over a trained model's generator token-embedding table."""

    def __init__(self, model):
        if model.generator is None:
            raise ValueError("model has no generator branch to take embeddings from")
        table = (model.generator.encoder.tok_emb.data
                 if hasattr(model.generator, "encoder")
                 else model.generator.tok_emb.data)
        self._table = table
        self._vocab = model.vocab
        self.dim = table.shape[1]

    def token_vector(self, token: str) -> np.ndarray:
        return self._table[self._vocab.id(token)].copy()

    def token_vectors(self, tokens) -> np.ndarray:
        if not tokens:
            return np.zeros((0, self.dim))
        return np.stack([self.token_vector(t) for t in tokens])

    def sentence_vector(self, tokens) -> np.ndarray:
        if not tokens:
            return np.zeros(self.dim)
        return self.token_vectors(tokens).mean(axis=0)


def reference_idf(corpus: list[EvalPair]) -> dict[str, float]:
    """Smoothed idf over reference sets: log((N + 1) / (df + 1))."""
    df: dict[str, int] = defaultdict(int)
    for pair in corpus:
        seen = set()
        for ref in pair.references:
            seen.update(ref)
        for tok in seen:
            df[tok] += 1
    n = len(corpus)
    return {tok: math.log((n + 1) / (d + 1)) for tok, d in df.items()}


def _idf_weight(idf: dict[str, float] | None, default: float, token: str) -> float:
    if idf is None:
        return 1.0
    return idf.get(token, default)


def _cosine_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    na = np.linalg.norm(a, axis=1, keepdims=True)
    nb = np.linalg.norm(b, axis=1, keepdims=True)
    na[na == 0] = 1.0
    nb[nb == 0] = 1.0
    return np.clip((a / na) @ (b / nb).T, -1.0, 1.0)


def _weighted_best_match(rows, row_weights, sims_per_row) -> float:
    total = math.fsum(row_weights)
    if total <= 0.0:  # degenerate idf: fall back to uniform weights
        row_weights = [1.0] * len(rows)
        total = float(len(rows))
    return math.fsum(w * s for w, s in zip(row_weights, sims_per_row)) / total


def bertscore(pair: EvalPair, emb, idf: dict[str, float] | None = None) -> float:
    """Greedy-matched cosine F-score.

    Every candidate token takes its best cosine against the reference
    (precision side) and vice versa (recall side); both sides are
    idf-weighted when a reference-corpus idf table is supplied. The best
    reference wins.
    """
    if not pair.candidate:
        return 0.0
    default_idf = math.log(2.0) if idf is not None else 1.0
    cand_vecs = emb.token_vectors(list(pair.candidate))
    best = 0.0
    for ref in pair.references:
        ref_vecs = emb.token_vectors(list(ref))
        sims = _cosine_matrix(cand_vecs, ref_vecs)
        p = _weighted_best_match(
            pair.candidate,
            [_idf_weight(idf, default_idf, t) for t in pair.candidate],
            sims.max(axis=1))
        r = _weighted_best_match(
            ref,
            [_idf_weight(idf, default_idf, t) for t in ref],
            sims.max(axis=0))
        if p + r > 0:
            best = max(best, 2 * p * r / (p + r))
    return best


def bertscore_corpus(corpus: list[EvalPair], emb) -> float:
    idf = reference_idf(corpus)
    return corpus_mean([bertscore(p, emb, idf) for p in corpus])


def laser_sim(pair: EvalPair, emb) -> float:
    """Sentence-embedding cosine mapped from [-1, 1] to [0, 1]; the best
    reference wins. Two zero vectors count as identical (cosine 1); a
    single zero vector scores cosine 0."""
    c = emb.sentence_vector(list(pair.candidate))
    best = 0.0
    for ref in pair.references:
        r = emb.sentence_vector(list(ref))
        nc, nr = np.linalg.norm(c), np.linalg.norm(r)
        if nc == 0.0 and nr == 0.0:
            cos = 1.0
        elif nc == 0.0 or nr == 0.0:
            cos = 0.0
        else:
            cos = float(np.dot(c, r) / (nc * nr))
            cos = max(-1.0, min(1.0, cos))  # guard float drift past +/-1
        best = max(best, (cos + 1.0) / 2.0)
    return best


def laser_corpus(corpus: list[EvalPair], emb) -> float:
    return corpus_mean([laser_sim(p, emb) for p in corpus])
