"""Edit-rate metrics: decomposed word error rate and shift-aware edit rate.

The word-error alignment minimizes unit-cost edits and, among minimal
alignments, maximizes matched words; with the edit distance e and match
count M fixed, the component counts are fully determined:

    substitutions S = |ref| + |cand| - e - 2M
    deletions     D = |ref|  - M - S
    insertions    I = |cand| - M - S

so the reported decomposition needs no backtrace and always satisfies
WER = D/|ref| + I/|ref| + S/|ref|.
"""

from __future__ import annotations

from dataclasses import dataclass

from .base import EvalPair, corpus_mean


@dataclass(frozen=True)
class WerScore:
    wer: float
    deletions: float
    insertions: float
    substitutions: float
    reference_length: int


def edit_distance(cand, ref) -> int:
    return _edit_stats(cand, ref)[0]


def _edit_stats(cand, ref) -> tuple[int, int]:
    """(minimal edit cost, maximal matches among minimal alignments).

    Lexicographic DP over (cost, -matches); both components add along an
    alignment path, so the usual optimal-substructure argument applies.
    """
    nc, nr = len(cand), len(ref)
    prev = [(j, 0) for j in range(nr + 1)]  # (cost, -matches)
    for i in range(1, nc + 1):
        cur = [(i, 0)]
        for j in range(1, nr + 1):
            if cand[i - 1] == ref[j - 1]:
                diag = (prev[j - 1][0], prev[j - 1][1] - 1)
            else:
                diag = (prev[j - 1][0] + 1, prev[j - 1][1])
            best = min(diag,
                       (prev[j][0] + 1, prev[j][1]),      # drop cand word
                       (cur[j - 1][0] + 1, cur[j - 1][1]))  # drop ref word
            cur.append(best)
        prev = cur
    cost, neg_matches = prev[nr]
    return cost, -neg_matches


def wer_counts(cand, ref) -> tuple[int, int, int, int]:
    """(edit distance, deletions, insertions, substitutions)."""
    e, m = _edit_stats(cand, ref)
    s = len(ref) + len(cand) - e - 2 * m
    d = len(ref) - m - s
    i = len(cand) - m - s
    return e, d, i, s


def wer_decomposed(pair: EvalPair) -> WerScore:
    """WER and its components against the minimum-WER reference."""
    best: WerScore | None = None
    for ref in pair.references:
        e, d, i, s = wer_counts(pair.candidate, ref)
        n = len(ref)
        score = WerScore(wer=e / n, deletions=d / n, insertions=i / n,
                         substitutions=s / n, reference_length=n)
        if best is None or score.wer < best.wer:
            best = score
    return best


def wer_corpus(corpus: list[EvalPair]) -> tuple[float, float, float, float]:
    scores = [wer_decomposed(p) for p in corpus]
    return (corpus_mean([s.wer for s in scores]),
            corpus_mean([s.deletions for s in scores]),
            corpus_mean([s.insertions for s in scores]),
            corpus_mean([s.substitutions for s in scores]))


# ---------------------------------------------------------------------------
# shift-aware edit rate


def _spans_of(ref) -> set[tuple]:
    spans = set()
    for i in range(len(ref)):
        for j in range(i + 1, len(ref) + 1):
            spans.add(tuple(ref[i:j]))
    return spans


def _best_shift(cand: list, ref, ref_spans: set[tuple], current: int) -> tuple[int, list] | None:
    """The block shift most reducing the edit distance.

    Candidate moves: any block of the hypothesis whose tokens appear as a
    contiguous span of the reference, moved to any other position. Ties
    break on (block start, block length, destination); only strict
    improvements qualify.
    """
    n = len(cand)
    best_key = None
    best = None
    for i in range(n):
        for j in range(i + 1, n + 1):
            block = tuple(cand[i:j])
            if block not in ref_spans:
                continue
            rest = cand[:i] + cand[j:]
            for k in range(len(rest) + 1):
                if k == i:
                    continue  # the identity move
                shifted = rest[:k] + list(block) + rest[k:]
                e = edit_distance(shifted, ref)
                key = (e, i, j - i, k)
                if best_key is None or key < best_key:
                    best_key = key
                    best = (e, shifted)
    if best is not None and best[0] < current:
        return best
    return None


def ter(pair: EvalPair) -> float:
    """(block shifts + remaining edits) / |reference|, with shifts chosen
    greedily while they strictly reduce the edit distance; minimum over
    references."""
    best = None
    for ref in pair.references:
        ref = list(ref)
        cand = list(pair.candidate)
        ref_spans = _spans_of(ref)
        shifts = 0
        e = edit_distance(cand, ref)
        while e > 0:
            found = _best_shift(cand, ref, ref_spans, e)
            if found is None:
                break
            e, cand = found
            shifts += 1
        score = (shifts + e) / len(ref)
        if best is None or score < best:
            best = score
    return best


def ter_corpus(corpus: list[EvalPair]) -> float:
    return corpus_mean([ter(p) for p in corpus])
