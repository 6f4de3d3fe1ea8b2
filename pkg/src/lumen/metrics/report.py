"""Corpus-level evaluation: all metric suites plus the diversity statistic.

Suites:
    gen  n-gram generation quality (BLEU-1..4, METEOR, ROUGE-L, CIDEr)
    sim  closeness measures (BERTScore, BP, chrF, GLEU, LASER, RIBES)
    err  error rates (TER, WER, WER-D, WER-I, WER-S)
"""

from __future__ import annotations

from dataclasses import dataclass, fields

from .align import meteor_corpus, ribes_corpus, rouge_l_corpus
from .base import EvalPair
from .cider import cider
from .editrate import ter_corpus, wer_corpus
from .embedding import bertscore_corpus, laser_corpus
from .ngram import bleu_suite, chrf_corpus, gleu_corpus

SUITES = ("gen", "sim", "err")

STOPWORDS_VERSION = 1

# Fixed English stop-word list (~150 entries); versioned with the repo so
# diversity counts stay comparable across runs.
STOPWORDS = frozenset("""
a about above after again against all am an and any are aren't as at be
because been before being below between both but by can't cannot could
couldn't did didn't do does doesn't doing don't down during each few for
from further had hadn't has hasn't have haven't having he he'd he'll he's
her here here's hers herself him himself his how how's i i'd i'll i'm i've
if in into is isn't it it's its itself let's me more most mustn't my myself
no nor not of off on once only or other ought our ours ourselves out over
own same shan't she she'd she'll she's should shouldn't so some such than
that that's the their theirs them themselves then there there's these they
they'd they'll they're they've this those through to too under until up
very was wasn't we we'd we'll we're we've were weren't what what's when
when's where where's which while who who's whom why why's with won't would
wouldn't you you'd you'll you're you've your yours yourself yourselves
""".split())


@dataclass
class MetricReport:
    """Corpus-level values for every computed metric; absent suites stay None."""

    b1: float | None = None
    b2: float | None = None
    b3: float | None = None
    b4: float | None = None
    meteor: float | None = None
    rouge_l: float | None = None
    cider: float | None = None
    bertscore_f: float | None = None
    bp: float | None = None
    chrf: float | None = None
    gleu: float | None = None
    laser_sim: float | None = None
    ribes: float | None = None
    ter: float | None = None
    wer: float | None = None
    wer_d: float | None = None
    wer_i: float | None = None
    wer_s: float | None = None
    unique_nonstop_count: int | None = None

    def as_dict(self) -> dict[str, float | int | None]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def check_ranges(self) -> list[str]:
        """Range violations per the metric contracts (empty when valid)."""
        unit = ("b1", "b2", "b3", "b4", "meteor", "rouge_l", "bertscore_f",
                "bp", "chrf", "gleu", "laser_sim", "ribes")
        nonneg = ("cider", "ter", "wer", "wer_d", "wer_i", "wer_s")
        bad = []
        for name in unit:
            v = getattr(self, name)
            if v is not None and not (0.0 <= v <= 1.0):
                bad.append(f"{name}={v} outside [0, 1]")
        for name in nonneg:
            v = getattr(self, name)
            if v is not None and v < 0.0:
                bad.append(f"{name}={v} negative")
        return bad


# Column order used by every emitted table: generation suite, then
# closeness, then error rates.
METRIC_COLUMNS = (
    ("b1", "B-1"), ("b2", "B-2"), ("b3", "B-3"), ("b4", "B-4"),
    ("meteor", "M"), ("rouge_l", "R-L"), ("cider", "C"),
    ("bertscore_f", "BERTScore"), ("bp", "BP"), ("chrf", "chrF"),
    ("gleu", "GLEU"), ("laser_sim", "LASER"), ("ribes", "RIBES"),
    ("ter", "TER"), ("wer", "WER"), ("wer_d", "WER-D"),
    ("wer_i", "WER-I"), ("wer_s", "WER-S"),
)


def diversity_stats(predictions: list[list[str]],
                    stopwords: frozenset[str] = STOPWORDS) -> int:
    """Number of distinct non-stop-word token types across all predictions."""
    seen: set[str] = set()
    for tokens in predictions:
        seen.update(t for t in tokens if t not in stopwords)
    return len(seen)


def evaluate_corpus(pairs: list[EvalPair], emb=None,
                    suites: tuple[str, ...] = SUITES) -> MetricReport:
    """Run the requested metric suites over the corpus."""
    if not pairs:
        raise ValueError("cannot evaluate an empty corpus")
    unknown = set(suites) - set(SUITES)
    if unknown:
        raise ValueError(f"unknown suites: {sorted(unknown)}")
    report = MetricReport()
    if "gen" in suites or "sim" in suites:
        bleu = bleu_suite(pairs)
    if "gen" in suites:
        report.b1, report.b2, report.b3, report.b4 = bleu.b1, bleu.b2, bleu.b3, bleu.b4
        report.meteor = meteor_corpus(pairs)
        report.rouge_l = rouge_l_corpus(pairs)
        report.cider = cider(pairs)
    if "sim" in suites:
        if emb is None:
            from .embedding import HashEmbeddingProvider

            emb = HashEmbeddingProvider()
        report.bp = bleu.bp
        report.bertscore_f = bertscore_corpus(pairs, emb)
        report.chrf = chrf_corpus(pairs)
        report.gleu = gleu_corpus(pairs)
        report.laser_sim = laser_corpus(pairs, emb)
        report.ribes = ribes_corpus(pairs)
    if "err" in suites:
        report.ter = ter_corpus(pairs)
        report.wer, report.wer_d, report.wer_i, report.wer_s = wer_corpus(pairs)
    report.unique_nonstop_count = diversity_stats([list(p.candidate) for p in pairs])
    return report
