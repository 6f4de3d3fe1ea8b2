"""Alignment-based metrics: unigram-alignment F (METEOR family), LCS F
(ROUGE-L), and rank-correlation order scoring (RIBES family)."""

from __future__ import annotations

from .base import EvalPair, corpus_mean

ROUGE_BETA = 1.2
RIBES_ALPHA = 0.25

_STEM_SUFFIXES = ("ing", "ed", "ly", "es", "s")
_MIN_STEM = 3


def stem(word: str) -> str:
    """Tiny deterministic suffix stripper used by the stem-match stage."""
    for suf in _STEM_SUFFIXES:
        if word.endswith(suf) and len(word) - len(suf) >= _MIN_STEM:
            return word[: -len(suf)]
    return word


def _stage_align(cand, ref, cand_free, ref_free, key) -> list[tuple[int, int]]:
    """Pair remaining candidate/reference tokens with equal `key` value,
    matching occurrences left to right (keeps chunks contiguous for
    repeated text)."""
    ref_slots: dict[str, list[int]] = {}
    for j in sorted(ref_free):
        ref_slots.setdefault(key(ref[j]), []).append(j)
    pairs = []
    for i in sorted(cand_free):
        slots = ref_slots.get(key(cand[i]))
        if slots:
            j = slots.pop(0)
            pairs.append((i, j))
            cand_free.discard(i)
            ref_free.discard(j)
    return pairs


def _align_unigrams(cand, ref) -> list[tuple[int, int]]:
    """Exact-match stage, then stem-match stage on the leftovers."""
    cand_free = set(range(len(cand)))
    ref_free = set(range(len(ref)))
    pairs = _stage_align(cand, ref, cand_free, ref_free, key=lambda w: w)
    pairs += _stage_align(cand, ref, cand_free, ref_free, key=stem)
    return sorted(pairs)


def _count_chunks(pairs: list[tuple[int, int]]) -> int:
    """Contiguous runs of the alignment, adjacent on both sides."""
    chunks = 0
    prev = None
    for i, j in pairs:
        if prev is None or i != prev[0] + 1 or j != prev[1] + 1:
            chunks += 1
        prev = (i, j)
    return chunks


def meteor(pair: EvalPair) -> float:
    """Fmean = 10PR / (R + 9P) over aligned unigrams, discounted by
    0.5 * (chunks / matches)^3; the best reference wins."""
    best = 0.0
    for ref in pair.references:
        pairs = _align_unigrams(pair.candidate, ref)
        m = len(pairs)
        if m == 0 or not pair.candidate:
            continue
        p = m / len(pair.candidate)
        r = m / len(ref)
        fmean = 10.0 * p * r / (r + 9.0 * p)
        penalty = 0.5 * (_count_chunks(pairs) / m) ** 3
        best = max(best, fmean * (1.0 - penalty))
    return best


def meteor_corpus(corpus: list[EvalPair]) -> float:
    return corpus_mean([meteor(p) for p in corpus])


def lcs_length(a, b) -> int:
    """Classic O(len(a) * len(b)) longest-common-subsequence table."""
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            if x == y:
                cur.append(prev[j - 1] + 1)
            else:
                cur.append(max(prev[j], cur[-1]))
        prev = cur
    return prev[-1]


def rouge_l(pair: EvalPair) -> float:
    """LCS-based F with recall weighting beta = 1.2; best reference wins."""
    if not pair.candidate:
        return 0.0
    best = 0.0
    b2 = ROUGE_BETA**2
    for ref in pair.references:
        lcs = lcs_length(pair.candidate, ref)
        if lcs == 0:
            continue
        p = lcs / len(pair.candidate)
        r = lcs / len(ref)
        best = max(best, (1 + b2) * r * p / (r + b2 * p))
    return best


def rouge_l_corpus(corpus: list[EvalPair]) -> float:
    return corpus_mean([rouge_l(p) for p in corpus])


def align_word_order(cand, ref) -> list[int]:
    """One-to-one alignment for order scoring: a candidate word aligns when
    it occurs exactly once on both sides, or when one of its neighbouring
    bigrams occurs exactly once on both sides. Returns the aligned
    reference positions in candidate order."""
    def count_bigram(tokens, bg):
        return sum(1 for k in range(len(tokens) - 1)
                   if (tokens[k], tokens[k + 1]) == bg)

    positions: list[int] = []
    used: set[int] = set()
    for i, w in enumerate(cand):
        target = None
        if ref.count(w) == 1 and cand.count(w) == 1:
            target = ref.index(w)
        else:
            if i + 1 < len(cand):
                bg = (w, cand[i + 1])
                if count_bigram(cand, bg) == 1 and count_bigram(ref, bg) == 1:
                    target = next(k for k in range(len(ref) - 1)
                                  if (ref[k], ref[k + 1]) == bg)
            if target is None and i > 0:
                bg = (cand[i - 1], w)
                if count_bigram(cand, bg) == 1 and count_bigram(ref, bg) == 1:
                    target = next(k for k in range(len(ref) - 1)
                                  if (ref[k], ref[k + 1]) == bg) + 1
        if target is not None and target not in used:
            used.add(target)
            positions.append(target)
    return positions


def normalized_kendall_tau(positions: list[int]) -> float:
    """(tau + 1) / 2 over the aligned positions; a single alignment is
    vacuously ordered (1.0), no alignment scores 0."""
    m = len(positions)
    if m == 0:
        return 0.0
    if m == 1:
        return 1.0
    concordant = sum(1 for i in range(m) for j in range(i + 1, m)
                     if positions[i] < positions[j])
    return concordant / (m * (m - 1) / 2)


def ribes(pair: EvalPair) -> float:
    """Normalized Kendall's tau of the aligned word order, scaled by
    unigram precision^0.25; best reference wins.

    A candidate identical to a reference is the identity alignment by
    definition and scores 1 even when repeated tokens defeat the
    unique-match heuristic."""
    if not pair.candidate:
        return 0.0
    best = 0.0
    for ref in pair.references:
        if pair.candidate == ref:
            return 1.0
        positions = align_word_order(list(pair.candidate), list(ref))
        if not positions:
            continue
        nkt = normalized_kendall_tau(positions)
        precision = len(positions) / len(pair.candidate)
        best = max(best, nkt * precision**RIBES_ALPHA)
    return best


def ribes_corpus(corpus: list[EvalPair]) -> float:
    return corpus_mean([ribes(p) for p in corpus])
