"""Shared types and n-gram utilities for the evaluation metrics."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass


@dataclass(frozen=True)
class EvalPair:
    """One candidate token sequence scored against >= 1 references."""

    candidate: tuple[str, ...]
    references: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        if not self.references:
            raise ValueError("EvalPair needs at least one reference")
        if any(len(r) == 0 for r in self.references):
            raise ValueError("references must contain at least one token")

    @staticmethod
    def of(candidate: list[str], references: list[list[str]]) -> "EvalPair":
        return EvalPair(tuple(candidate), tuple(tuple(r) for r in references))


def ngram_counts(tokens: tuple[str, ...] | list[str], n: int) -> Counter:
    """Multiset of n-grams of exactly order n."""
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def pooled_ngram_counts(tokens, max_n: int) -> Counter:
    """Multiset of all n-grams with 1 <= n <= max_n pooled together."""
    pooled: Counter = Counter()
    for n in range(1, max_n + 1):
        pooled.update(ngram_counts(tokens, n))
    return pooled


def overlap(a: Counter, b: Counter) -> int:
    """Size of the multiset intersection."""
    return sum((a & b).values())


def corpus_mean(values: list[float]) -> float:
    """Order-independent mean (exactly rounded summation)."""
    import math

    if not values:
        raise ValueError("mean of an empty corpus")
    return math.fsum(values) / len(values)
