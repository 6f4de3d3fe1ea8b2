import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lumen.data import (CLS_ID, EXHVV_TEST, EXHVV_TRAINVAL, DatasetError,
                        MemeSample, PAD_ID, SEP_ID, UNK_ID, Vocabulary,
                        build_pair_input, build_prompt, load_dataset,
                        parse_prompt, render_prompt, tokenize, truncate_pair,
                        validate_counts)

WORDS = st.lists(st.text(alphabet="abcdefg", min_size=1, max_size=5),
                 min_size=0, max_size=8)


def make_sample(**kw):
    base = dict(id="s1", ocr_text="some text", caption="a meme", entity="x",
                role="hero", explanations=["x helps"], split="train")
    base.update(kw)
    return MemeSample(**base)


# -- tokenize ---------------------------------------------------------------


def test_tokenize_empty():
    assert tokenize("") == []


def test_tokenize_punctuation_and_case():
    assert tokenize("The cat, sat.") == ["the", "cat", ",", "sat", "."]


def test_tokenize_collapses_whitespace():
    assert tokenize("a  b") == ["a", "b"]


@given(st.text(max_size=40))
@settings(max_examples=200, deadline=None)
def test_tokenize_idempotent(text):
    once = tokenize(text)
    assert tokenize(" ".join(once)) == once


# -- pair input -------------------------------------------------------------


@given(WORDS, st.lists(st.text(alphabet="xyz", min_size=1, max_size=4),
                       min_size=1, max_size=3))
@settings(max_examples=100, deadline=None)
def test_pair_input_structure(a_words, b_words):
    vocab = Vocabulary(sorted(set(a_words) | set(b_words)))
    pair = build_pair_input(" ".join(a_words), " ".join(b_words), vocab)
    ids = list(pair.token_ids)
    assert ids[0] == CLS_ID
    assert ids.count(CLS_ID) == 1
    assert ids.count(SEP_ID) == 2
    first_sep = ids.index(SEP_ID)
    assert ids[-1] == SEP_ID
    assert first_sep == 1 + pair.a_length


def test_pair_input_example():
    vocab = Vocabulary(["a", "b"])
    pair = build_pair_input("a", "b", vocab)
    assert list(pair.token_ids) == [CLS_ID, vocab.id("a"), SEP_ID, vocab.id("b"), SEP_ID]


def test_pair_input_empty_a():
    vocab = Vocabulary(["b"])
    pair = build_pair_input("", "b", vocab)
    assert list(pair.token_ids) == [CLS_ID, SEP_ID, vocab.id("b"), SEP_ID]


def test_pair_input_oov_maps_to_unk():
    vocab = Vocabulary(["a"])
    pair = build_pair_input("a", "mystery", vocab)
    assert list(pair.token_ids) == [CLS_ID, vocab.id("a"), SEP_ID, UNK_ID, SEP_ID]


def test_truncate_pair_drops_b_then_a():
    vocab = Vocabulary(["a", "b", "c", "d", "e"])
    pair = build_pair_input("a b c", "d e", vocab)  # length 8
    cut, dropped_a, dropped_b = truncate_pair(pair, 6)
    assert (dropped_a, dropped_b) == (0, 2)
    assert list(cut.token_ids) == [CLS_ID, vocab.id("a"), vocab.id("b"),
                                   vocab.id("c"), SEP_ID, SEP_ID]
    cut2, dropped_a2, dropped_b2 = truncate_pair(pair, 5)
    assert (dropped_a2, dropped_b2) == (1, 2)
    assert len(cut2) == 5


# -- prompts ----------------------------------------------------------------


def test_prompt_template_exact():
    text = render_prompt("X", "villain", "A", "B")
    assert text == "Generate explanation for X as villain: A [SEP] B [SEP]"


def test_prompt_empty_caption_keeps_separator_slot():
    text = render_prompt("X", "hero", "A", "")
    assert text == "Generate explanation for X as hero: A [SEP]  [SEP]"


def test_prompt_without_caption_variant():
    text = render_prompt("X", "hero", "A", "B", include_caption=False)
    assert text == "Generate explanation for X as hero: A [SEP]"


def test_prompt_round_trip_parse():
    text = render_prompt("Gov X", "victim", "ocr words here", "a caption")
    assert parse_prompt(text) == ("Gov X", "victim", "ocr words here", "a caption")


def test_prompt_tokenization_keeps_sep_markers():
    vocab = Vocabulary(["generate", "explanation", "for", "as", ":", "x",
                        "villain", "a", "b"])
    prompt = build_prompt("x", "villain", "a", "b", vocab)
    assert list(prompt.token_ids).count(SEP_ID) == 2
    rendered_back = vocab.decode(list(prompt.token_ids), keep_markers=True)
    assert rendered_back.count("[SEP]") == 2


def test_prompt_rejects_unknown_role():
    with pytest.raises(ValueError, match="unknown role"):
        render_prompt("x", "bystander", "a", "b")


# -- vocabulary -------------------------------------------------------------


def test_vocabulary_reserved_ids_fixed():
    vocab = Vocabulary(["cat"])
    assert [vocab.id_to_token[i] for i in range(6)] == \
        ["[PAD]", "[UNK]", "[BOS]", "[EOS]", "[SEP]", "[CLS]"]
    assert vocab.id("cat") == 6
    assert vocab.id("dog") == UNK_ID


def test_vocabulary_bijection_guard():
    with pytest.raises(ValueError, match="duplicate"):
        Vocabulary(["cat", "cat"])


def test_vocabulary_build_uses_train_split_only():
    train = make_sample(ocr_text="seen words", explanations=["seen explanation"])
    test = make_sample(id="s2", split="test", ocr_text="hidden token",
                       explanations=["hidden explanation"])
    vocab = Vocabulary.build([train, test])
    assert "seen" in vocab
    assert "hidden" not in vocab


# -- dataset loading --------------------------------------------------------


def write_jsonl(path, records):
    path.write_text("\n".join(json.dumps(r) for r in records) + "\n",
                    encoding="utf-8")


def record(**kw):
    base = dict(id="r1", image_path=None, ocr_text="text", caption="cap",
                entity="e", role="hero", explanations=["e helps"],
                split="train", domain="covid19")
    base.update(kw)
    return base


def test_load_empty_file(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("", encoding="utf-8")
    assert load_dataset(path) == []


def test_load_three_lines_in_order(tmp_path):
    path = tmp_path / "three.jsonl"
    write_jsonl(path, [record(id=f"r{i}") for i in range(3)])
    samples = load_dataset(path)
    assert [s.id for s in samples] == ["r0", "r1", "r2"]


def test_load_rejects_role_other_with_line_number(tmp_path):
    path = tmp_path / "bad.jsonl"
    write_jsonl(path, [record(), record(id="r2", role="other"), record(id="r3")])
    with pytest.raises(DatasetError, match="line 2.*other"):
        load_dataset(path)


def test_load_missing_file():
    with pytest.raises(DatasetError, match="not found"):
        load_dataset("/nonexistent/data.jsonl")


def test_load_malformed_line_reports_line_number(tmp_path):
    path = tmp_path / "mal.jsonl"
    path.write_text(json.dumps(record()) + "\n{not json\n", encoding="utf-8")
    with pytest.raises(DatasetError, match="line 2"):
        load_dataset(path)


def test_load_collects_all_errors(tmp_path):
    path = tmp_path / "multi.jsonl"
    write_jsonl(path, [record(role="other"), record(split="dev")])
    with pytest.raises(DatasetError, match="2 bad record"):
        load_dataset(path)


# -- count validation -------------------------------------------------------


def test_counts_empty_is_all_zero():
    table = validate_counts([])
    assert table.total() == 0
    assert table.cell("hero", "train", "covid19") == 0


def test_counts_single_cell():
    table = validate_counts([make_sample(domain="covid19")])
    assert table.total() == 1
    assert table.cell("hero", "train", "covid19") == 1
    assert sum(v for v in table.cells.values()) == 1


def exhvv_shaped_samples():
    samples = []
    i = 0
    for (role, domain, split), n in EXHVV_TRAINVAL.items():
        for _ in range(n):
            samples.append(make_sample(id=f"x{i}", role=role, domain=domain,
                                       split=split,
                                       explanations=[f"{role} explanation"]))
            i += 1
    for role, n in EXHVV_TEST.items():
        for _ in range(n):
            samples.append(make_sample(id=f"x{i}", role=role, split="test",
                                       domain="us_politics",
                                       explanations=[f"{role} explanation"]))
            i += 1
    return samples


def test_counts_match_published_table():
    samples = exhvv_shaped_samples()
    table = validate_counts(samples, expect_exhvv=True)
    assert table.total() == 4680
    assert table.role_total("villain") == 3004
    assert table.role_total("victim") == 1110
    assert table.role_total("hero") == 566
    assert table.split_total("test") == 501


def test_counts_mismatch_reports_cells():
    samples = exhvv_shaped_samples()[:-1]  # drop one hero/test sample
    with pytest.raises(DatasetError) as err:
        validate_counts(samples, expect_exhvv=True)
    msg = str(err.value)
    assert "hero/test: expected 50, got 49" in msg
    assert "grand total: expected 4680, got 4679" in msg
