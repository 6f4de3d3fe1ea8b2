"""Independent brute-force oracles for the metric suite.

These deliberately re-derive each score through a different route than the
package implementation: exhaustive enumeration where feasible, recursive
alignment search with explicit op counting for edit rates, and a
transcription of the classic consensus-metric reference algorithm for the
tf-idf cosine score. They share only the documented algorithm contracts
(tie-break rules, stage orders), never code.
"""

from __future__ import annotations

import math
from collections import defaultdict
from functools import lru_cache


# ---------------------------------------------------------------------------
# n-gram scores


def _grams(seq, n):
    return [tuple(seq[i : i + n]) for i in range(len(seq) - n + 1)]


def oracle_bleu(corpus):
    """(B1, B2, B3, B4, BP) by direct counting, effective-order convention."""
    matched = {n: 0 for n in range(1, 5)}
    totals = {n: 0 for n in range(1, 5)}
    c_len = 0
    r_len = 0
    for cand, refs in corpus:
        c_len += len(cand)
        # closest reference length, ties to the shorter
        best = None
        for ref in refs:
            key = (abs(len(ref) - len(cand)), len(ref))
            if best is None or key < best:
                best = key
        r_len += best[1]
        for n in range(1, 5):
            cg = _grams(cand, n)
            totals[n] += len(cg)
            for gram in set(cg):
                have = cg.count(gram)
                allow = max((_grams(ref, n).count(gram) for ref in refs), default=0)
                matched[n] += min(have, allow)
    bp = 0.0 if c_len == 0 else min(1.0, math.exp(1.0 - r_len / c_len))
    out = []
    for n in range(1, 5):
        logs = []
        dead = False
        for k in range(1, n + 1):
            if totals[k] == 0:
                continue  # effective order: skip empty orders
            if matched[k] == 0:
                dead = True
                break
            logs.append(math.log(matched[k] / totals[k]))
        if dead or not logs:
            out.append(0.0)
        else:
            out.append(bp * math.exp(sum(logs) / len(logs)))
    return (*out, bp)


def oracle_gleu(cand, refs):
    best = 0.0
    for ref in refs:
        cg = []
        rg = []
        for n in range(1, 5):
            cg += _grams(cand, n)
            rg += _grams(ref, n)
        inter = 0
        pool = list(rg)
        for g in cg:
            if g in pool:
                pool.remove(g)
                inter += 1
        if inter and cg and rg:
            best = max(best, min(inter / len(cg), inter / len(rg)))
    return best


def oracle_chrf(cand, refs, max_n=6, beta=2.0):
    def chars_ngrams(tokens, n):
        s = "".join(tokens)
        return [s[i : i + n] for i in range(len(s) - n + 1)]

    best = 0.0
    for ref in refs:
        precisions = []
        recalls = []
        for n in range(1, max_n + 1):
            cg = chars_ngrams(cand, n)
            rg = chars_ngrams(ref, n)
            if not cg or not rg:
                continue
            pool = list(rg)
            inter = 0
            for g in cg:
                if g in pool:
                    pool.remove(g)
                    inter += 1
            precisions.append(inter / len(cg))
            recalls.append(inter / len(rg))
        if not precisions:
            continue
        p = sum(precisions) / len(precisions)
        r = sum(recalls) / len(recalls)
        if p + r > 0:
            f = (1 + beta**2) * p * r / (beta**2 * p + r)
            best = max(best, f)
    return best


def oracle_rouge_l(cand, refs, beta=1.2):
    cand = tuple(cand)

    def lcs(a, b):
        @lru_cache(maxsize=None)
        def go(i, j):
            if i == 0 or j == 0:
                return 0
            if a[i - 1] == b[j - 1]:
                return go(i - 1, j - 1) + 1
            return max(go(i - 1, j), go(i, j - 1))

        return go(len(a), len(b))

    best = 0.0
    for ref in [tuple(r) for r in refs]:
        n = lcs(cand, ref)
        if n == 0 or not cand:
            continue
        p = n / len(cand)
        r = n / len(ref)
        best = max(best, (1 + beta**2) * r * p / (r + beta**2 * p))
    return best


# ---------------------------------------------------------------------------
# edit rates


def oracle_wer_counts(cand, ref):
    """(distance, deletions, insertions, substitutions) via recursive
    alignment search minimizing (cost, -matches) and carrying explicit op
    counts along the winning path."""
    cand = tuple(cand)
    ref = tuple(ref)

    @lru_cache(maxsize=None)
    def go(i, j):
        # returns (cost, -matches, d, ins, s) aligning cand[i:] with ref[j:]
        if i == len(cand) and j == len(ref):
            return (0, 0, 0, 0, 0)
        options = []
        if i < len(cand) and j < len(ref):
            c, m, d, ins, s = go(i + 1, j + 1)
            if cand[i] == ref[j]:
                options.append((c, m - 1, d, ins, s))
            else:
                options.append((c + 1, m, d, ins, s + 1))
        if i < len(cand):  # candidate word with no reference counterpart
            c, m, d, ins, s = go(i + 1, j)
            options.append((c + 1, m, d, ins + 1, s))
        if j < len(ref):  # reference word missing from the candidate
            c, m, d, ins, s = go(i, j + 1)
            options.append((c + 1, m, d + 1, ins, s))
        return min(options, key=lambda t: (t[0], t[1]))

    cost, _, d, ins, s = go(0, 0)
    return cost, d, ins, s


def oracle_wer(cand, refs):
    """(WER, D, I, S) rates against the minimum-WER reference."""
    best = None
    for ref in refs:
        cost, d, ins, s = oracle_wer_counts(cand, ref)
        n = len(ref)
        rates = (cost / n, d / n, ins / n, s / n)
        if best is None or rates[0] < best[0]:
            best = rates
    return best


def _oracle_edit(cand, ref):
    return oracle_wer_counts(cand, ref)[0]


def oracle_ter(cand, refs):
    """Greedy block-shift edit rate; minimum over references.

    Shift contract (mirrors the documented algorithm): a movable block must
    appear verbatim as a contiguous reference span; the winning move
    minimizes (resulting edit distance, block start, block length,
    destination index in the block-removed sequence); only strict
    improvements are applied, each costing one edit.
    """
    best_score = None
    for ref in refs:
        ref = list(ref)
        spans = set()
        for a in range(len(ref)):
            for b in range(a + 1, len(ref) + 1):
                spans.add(tuple(ref[a:b]))
        hyp = list(cand)
        edits = _oracle_edit(hyp, ref)
        shifts = 0
        while edits > 0:
            moves = []
            for i in range(len(hyp)):
                for j in range(i + 1, len(hyp) + 1):
                    if tuple(hyp[i:j]) not in spans:
                        continue
                    remainder = hyp[:i] + hyp[j:]
                    for k in range(len(remainder) + 1):
                        if k == i:
                            continue
                        candidate = remainder[:k] + hyp[i:j] + remainder[k:]
                        moves.append(((
                            _oracle_edit(candidate, ref), i, j - i, k), candidate))
            moves = [m for m in moves if m[0][0] < edits]
            if not moves:
                break
            key, hyp = min(moves, key=lambda m: m[0])
            edits = key[0]
            shifts += 1
        score = (shifts + edits) / len(ref)
        if best_score is None or score < best_score:
            best_score = score
    return best_score


# ---------------------------------------------------------------------------
# order correlation


def oracle_ribes(cand, refs, alpha=0.25):
    """Word-order score with the documented unique/bigram alignment rules;
    concordance counted by brute-force pair enumeration."""
    cand = list(cand)
    if not cand:
        return 0.0
    best = 0.0
    for ref in refs:
        ref = list(ref)
        if cand == ref:
            return 1.0
        aligned = []
        taken = set()
        for i, w in enumerate(cand):
            spot = None
            if cand.count(w) == 1 and ref.count(w) == 1:
                spot = ref.index(w)
            else:
                nxt = (w, cand[i + 1]) if i + 1 < len(cand) else None
                prv = (cand[i - 1], w) if i > 0 else None
                for bg, offset in ((nxt, 0), (prv, 1)):
                    if bg is None:
                        continue
                    in_cand = [k for k in range(len(cand) - 1)
                               if (cand[k], cand[k + 1]) == bg]
                    in_ref = [k for k in range(len(ref) - 1)
                              if (ref[k], ref[k + 1]) == bg]
                    if len(in_cand) == 1 and len(in_ref) == 1:
                        spot = in_ref[0] + offset
                        break
            if spot is not None and spot not in taken:
                taken.add(spot)
                aligned.append(spot)
        if not aligned:
            continue
        if len(aligned) == 1:
            nkt = 1.0
        else:
            pairs = 0
            concordant = 0
            for a in range(len(aligned)):
                for b in range(a + 1, len(aligned)):
                    pairs += 1
                    concordant += aligned[a] < aligned[b]
            nkt = concordant / pairs
        best = max(best, nkt * (len(aligned) / len(cand)) ** alpha)
    return best


# ---------------------------------------------------------------------------
# consensus tf-idf cosine (transcription of the classic reference scorer)


def oracle_cider(corpus, n_max=4, sigma=6.0):
    def precook(words):
        counts = defaultdict(int)
        for k in range(1, n_max + 1):
            for i in range(len(words) - k + 1):
                counts[tuple(words[i : i + k])] += 1
        return counts

    crefs = [[precook(ref) for ref in refs] for _, refs in corpus]
    ctest = [precook(cand) for cand, _ in corpus]

    document_frequency = defaultdict(float)
    for refs in crefs:
        for ngram in set(ng for ref in refs for ng in ref):
            document_frequency[ngram] += 1

    ref_len = math.log(float(len(crefs)))

    def counts2vec(cnts):
        vec = [defaultdict(float) for _ in range(n_max)]
        length = 0
        norm = [0.0] * n_max
        for ngram, term_freq in cnts.items():
            df = math.log(max(1.0, document_frequency[ngram]))
            k = len(ngram) - 1
            vec[k][ngram] = float(term_freq) * (ref_len - df)
            norm[k] += pow(vec[k][ngram], 2)
            if k == 1:
                length += term_freq
        return vec, [math.sqrt(x) for x in norm], length

    def sim(vec_hyp, vec_ref, norm_hyp, norm_ref, length_hyp, length_ref):
        delta = float(length_hyp - length_ref)
        val = [0.0] * n_max
        for k in range(n_max):
            for ngram, count in vec_hyp[k].items():
                val[k] += min(vec_hyp[k][ngram], vec_ref[k][ngram]) * vec_ref[k][ngram]
            if norm_hyp[k] != 0 and norm_ref[k] != 0:
                val[k] /= norm_hyp[k] * norm_ref[k]
            val[k] *= math.e ** (-(delta**2) / (2 * sigma**2))
        return val

    scores = []
    for test, refs in zip(ctest, crefs):
        vec, norm, length = counts2vec(test)
        score = [0.0] * n_max
        for ref in refs:
            vec_ref, norm_ref, length_ref = counts2vec(ref)
            for k, v in enumerate(sim(vec, vec_ref, norm, norm_ref, length, length_ref)):
                score[k] += v
        score_avg = sum(score) / n_max
        score_avg /= len(refs)
        scores.append(score_avg * 10.0)
    return sum(scores) / len(scores), scores
