import numpy as np
import pytest

from lumen.data import ROLES, load_dataset, tokenize
from lumen.synth import ROLE_KEYWORDS, SyntheticSpec, generate_synthetic_corpus, \
    write_corpus


def corpus_fingerprint(samples):
    recs = [s.to_record() for s in samples]
    images = [s._image.tobytes() if s._image is not None else b"" for s in samples]
    return recs, images


def test_same_seed_gives_identical_corpora():
    spec = SyntheticSpec(seed=42, per_role=(3, 2, 4))
    a = corpus_fingerprint(generate_synthetic_corpus(spec))
    b = corpus_fingerprint(generate_synthetic_corpus(spec))
    assert a == b


def test_different_seed_differs():
    a = generate_synthetic_corpus(SyntheticSpec(seed=1, per_role=(2, 2, 2)))
    b = generate_synthetic_corpus(SyntheticSpec(seed=2, per_role=(2, 2, 2)))
    assert [s.ocr_text for s in a] != [s.ocr_text for s in b]


def test_per_role_counts():
    corpus = generate_synthetic_corpus(SyntheticSpec(seed=0, per_role=(2, 2, 2)))
    assert len(corpus) == 6
    for role in ROLES:
        assert sum(1 for s in corpus if s.role == role) == 2


def test_zero_samples_gives_empty_corpus():
    assert generate_synthetic_corpus(SyntheticSpec(seed=0, per_role=(0, 0, 0))) == []


def test_decision_stump_on_planted_keyword_is_perfect():
    """Brute-force over the OCR vocabulary: for every role there must exist
    a single token whose presence exactly indicates that role, so a stump
    per role classifies the corpus with 100% accuracy."""
    corpus = generate_synthetic_corpus(SyntheticSpec(seed=5, per_role=(6, 6, 6)))
    vocab = sorted({t for s in corpus for t in tokenize(s.ocr_text)})
    for role in ROLES:
        indicators = [
            token for token in vocab
            if all((token in tokenize(s.ocr_text)) == (s.role == role)
                   for s in corpus)
        ]
        assert indicators, f"no perfect stump token found for role {role}"


def test_keywords_are_role_exclusive():
    corpus = generate_synthetic_corpus(SyntheticSpec(seed=9, per_role=(5, 5, 5)))
    for s in corpus:
        toks = set(tokenize(s.ocr_text))
        assert ROLE_KEYWORDS[s.role] in toks
        for other, kw in ROLE_KEYWORDS.items():
            if other != s.role:
                assert kw not in toks


def test_explanation_grammar_starts_with_entity():
    corpus = generate_synthetic_corpus(SyntheticSpec(seed=3, per_role=(2, 2, 2)))
    for s in corpus:
        for e in s.explanations:
            assert e.split()[0] == s.entity


def test_split_fractions():
    spec = SyntheticSpec(seed=4, per_role=(10, 10, 10), val_fraction=0.2,
                         test_fraction=0.1)
    corpus = generate_synthetic_corpus(spec)
    counts = {split: sum(1 for s in corpus if s.split == split)
              for split in ("train", "val", "test")}
    assert counts == {"train": 21, "val": 6, "test": 3}


def test_invalid_spec_rejected():
    with pytest.raises(ValueError, match="divisible"):
        SyntheticSpec(seed=0, image_size=30, patch_size=8).validate()
    with pytest.raises(ValueError, match="negative"):
        SyntheticSpec(seed=0, per_role=(-1, 2, 2)).validate()


def test_write_corpus_round_trip_with_lazy_images(tmp_path):
    spec = SyntheticSpec(seed=8, per_role=(1, 1, 1))
    corpus = generate_synthetic_corpus(spec)
    path = write_corpus(corpus, tmp_path / "corpus.jsonl")
    loaded = load_dataset(path)
    assert [s.id for s in loaded] == [s.id for s in corpus]
    for orig, back in zip(corpus, loaded):
        assert back.image is not None
        np.testing.assert_array_equal(back.image, orig._image)


def test_write_corpus_twice_is_byte_identical(tmp_path):
    spec = SyntheticSpec(seed=8, per_role=(2, 1, 1))
    for d in ("a", "b"):
        (tmp_path / d).mkdir()
        write_corpus(generate_synthetic_corpus(spec), tmp_path / d / "corpus.jsonl")
    assert (tmp_path / "a/corpus.jsonl").read_bytes() == \
        (tmp_path / "b/corpus.jsonl").read_bytes()
    for img in sorted(p.name for p in (tmp_path / "a/corpus_images").iterdir()):
        assert (tmp_path / "a/corpus_images" / img).read_bytes() == \
            (tmp_path / "b/corpus_images" / img).read_bytes()
