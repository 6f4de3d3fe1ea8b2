"""Evaluation metric suites for generated explanations."""

from .align import meteor, meteor_corpus, ribes, ribes_corpus, rouge_l, rouge_l_corpus
from .base import EvalPair, corpus_mean
from .cider import cider, cider_scores
from .editrate import WerScore, edit_distance, ter, ter_corpus, wer_corpus, \
    wer_counts, wer_decomposed
from .embedding import HashEmbeddingProvider, ModelEmbeddingProvider, bertscore, \
    bertscore_corpus, laser_corpus, laser_sim, reference_idf
from .ngram import BleuResult, bleu_suite, chrf, chrf_corpus, gleu, gleu_corpus, \
    unclipped_precisions
from .report import METRIC_COLUMNS, STOPWORDS, MetricReport, SUITES, \
    diversity_stats, evaluate_corpus

__all__ = [
    "EvalPair", "corpus_mean", "BleuResult", "bleu_suite", "unclipped_precisions",
    "gleu", "gleu_corpus", "chrf", "chrf_corpus", "cider", "cider_scores",
    "meteor", "meteor_corpus", "rouge_l", "rouge_l_corpus", "ribes", "ribes_corpus",
    "WerScore", "wer_counts", "wer_decomposed", "wer_corpus", "edit_distance",
    "ter", "ter_corpus", "HashEmbeddingProvider", "ModelEmbeddingProvider",
    "bertscore", "bertscore_corpus", "laser_sim", "laser_corpus", "reference_idf",
    "MetricReport", "METRIC_COLUMNS", "STOPWORDS", "SUITES", "diversity_stats",
    "evaluate_corpus",
]
