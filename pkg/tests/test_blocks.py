import numpy as np
import pytest

from lumen import autodiff as ad
from lumen.blocks import BlockConfig, DecoderOnlyGenerator, PatchImageEncoder, \
    PromptedGenerator, TextPairEncoder, encode_image, encode_pair
from lumen.data import BOS_ID, CLS_ID, EOS_ID, PAD_ID, SEP_ID, SequencePairInput
from lumen.gradcheck import check_generator, check_patch_encoder, \
    check_text_pair_encoder


def tiny_cfg(vocab_size=16, d_model=8, max_len=32):
    return BlockConfig(d_model=d_model, n_layers=1, n_heads=2, d_ff=16,
                       max_len=max_len, vocab_size=vocab_size)


def pair_of(a_ids, b_ids):
    return SequencePairInput((CLS_ID, *a_ids, SEP_ID, *b_ids, SEP_ID),
                             len(a_ids), len(b_ids))


def test_block_config_validation():
    with pytest.raises(ValueError, match="divisible"):
        BlockConfig(d_model=10, n_heads=4)
    with pytest.raises(ValueError, match="positive"):
        BlockConfig(n_layers=0)


def test_encode_pair_shapes():
    enc = TextPairEncoder(np.random.default_rng(0), tiny_cfg())
    pair = pair_of([7, 8, 9], [10])
    hidden, pooled = encode_pair(pair, enc)
    assert hidden.shape == (len(pair), 8)
    assert pooled.shape == (8,)


def test_encode_pair_masked_tail_is_ignored():
    """A PAD-only tail, of any length, must not change the pooled vector."""
    enc = TextPairEncoder(np.random.default_rng(1), tiny_cfg())
    base = (CLS_ID, 7, 8, SEP_ID, 9, SEP_ID)
    _, pooled_plain = encode_pair(SequencePairInput(base, 2, 1), enc)
    for n_pad in (1, 2, 5):
        padded = SequencePairInput(base + (PAD_ID,) * n_pad, 2, 1)
        _, pooled_padded = encode_pair(padded, enc)
        np.testing.assert_allclose(pooled_padded.data, pooled_plain.data, atol=1e-12)


def test_encode_pair_truncates_b_side_first():
    enc = TextPairEncoder(np.random.default_rng(2), tiny_cfg(max_len=6))
    pair = pair_of([7, 8, 9], [10, 11])  # length 8 > 6
    _, _, (dropped_a, dropped_b) = enc.encode(pair)
    assert (dropped_a, dropped_b) == (0, 2)


def test_gradcheck_encode_pair():
    assert check_text_pair_encoder(0).max_rel_err < 1e-4


def test_patch_count():
    enc = PatchImageEncoder(np.random.default_rng(0), tiny_cfg(), patch_size=8)
    image = np.zeros((16, 16, 3), dtype=np.uint8)
    assert enc.patchify(image).shape == (4, 8 * 8 * 3)


def test_indivisible_image_names_required_padding():
    enc = PatchImageEncoder(np.random.default_rng(0), tiny_cfg(), patch_size=8)
    with pytest.raises(ValueError, match="pad to 16x24"):
        enc.patchify(np.zeros((13, 17, 3), dtype=np.uint8))


def test_zero_image_with_zero_biases_gives_position_baseline():
    """With a black image and zero patch-projection bias, the encoding is a
    function of position embeddings alone (the no-content baseline)."""
    enc = PatchImageEncoder(np.random.default_rng(3), tiny_cfg(), patch_size=8)
    enc.patch_proj.b.data = np.zeros_like(enc.patch_proj.b.data)
    black_a = encode_image(np.zeros((16, 16, 3), dtype=np.uint8), enc)
    black_b = encode_image(np.zeros((16, 16, 3), dtype=np.uint8), enc)
    np.testing.assert_array_equal(black_a.data, black_b.data)
    lit = encode_image(np.full((16, 16, 3), 255, dtype=np.uint8), enc)
    assert not np.allclose(lit.data, black_a.data)


def test_identical_images_encode_identically():
    enc = PatchImageEncoder(np.random.default_rng(4), tiny_cfg(), patch_size=8)
    rng = np.random.default_rng(5)
    image = rng.integers(0, 256, size=(16, 16, 3)).astype(np.uint8)
    a = encode_image(image, enc)
    b = encode_image(image.copy(), enc)
    np.testing.assert_array_equal(a.data, b.data)


def test_gradcheck_patch_encoder():
    assert check_patch_encoder(0).max_rel_err < 1e-4


# -- generators ---------------------------------------------------------------


@pytest.fixture(params=["encoder_decoder", "decoder_only"])
def generator(request):
    cls = PromptedGenerator if request.param == "encoder_decoder" else DecoderOnlyGenerator
    return cls(np.random.default_rng(6), tiny_cfg(vocab_size=12))


PROMPT = np.array([7, 8, 9])


def test_forced_probability_single_allowed_token(generator):
    """Restricting the output support to one token forces p = 1, loss 0."""
    target = np.array([BOS_ID, 7, 7, 7])
    probs, pooled, loss = generator.teacher_forced(PROMPT, target, allowed_ids={7})
    assert loss.item() == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_allclose(probs[:, 7], np.ones(3))


def test_uniform_head_loss_is_log_vocab(generator):
    generator.out_proj.w.data[:] = 0.0
    generator.out_proj.b.data[:] = 0.0
    target = np.array([BOS_ID, 7, 8, EOS_ID])
    probs, _, loss = generator.teacher_forced(PROMPT, target)
    assert loss.item() == pytest.approx(np.log(12), abs=1e-12)
    np.testing.assert_allclose(probs, np.full((3, 12), 1 / 12), atol=1e-12)


def test_target_validation(generator):
    with pytest.raises(ValueError, match="begin with BOS"):
        generator.teacher_forced(PROMPT, np.array([7, EOS_ID]))
    with pytest.raises(ValueError, match="end with EOS"):
        generator.teacher_forced(PROMPT, np.array([BOS_ID, 7, 8]))
    with pytest.raises(ValueError, match="empty"):
        generator.teacher_forced(PROMPT, np.array([], dtype=np.intp))


def test_causality_later_target_tokens_do_not_leak(generator):
    """Perturbing target token t leaves distributions at steps <= t alone."""
    base = np.array([BOS_ID, 7, 8, 9, EOS_ID])
    probs_base, _, _ = generator.teacher_forced(PROMPT, base)
    changed = base.copy()
    changed[3] = 10  # token y_3 (0-based position 3)
    probs_changed, _, _ = generator.teacher_forced(PROMPT, changed)
    # steps 1..3 predict y_1..y_3 from prefixes untouched by the change
    np.testing.assert_allclose(probs_changed[:3], probs_base[:3], atol=1e-12)
    assert not np.allclose(probs_changed[3], probs_base[3])


def test_prompt_sensitivity_first_step(generator):
    target = np.array([BOS_ID, 7, EOS_ID])
    probs_a, _, _ = generator.teacher_forced(np.array([7, 8, 9]), target)
    probs_b, _, _ = generator.teacher_forced(np.array([10, 8, 9]), target)
    assert not np.allclose(probs_a[0], probs_b[0])


def test_pooled_state_is_mean_of_positions():
    gen = PromptedGenerator(np.random.default_rng(8), tiny_cfg(vocab_size=12))
    target = np.array([BOS_ID, 7, 8, EOS_ID])
    memory, keep = gen.encode_prompt(PROMPT)
    hidden = gen._decode_hidden(target[:-1], memory, keep)
    _, pooled, _ = gen.teacher_forced(PROMPT, target)
    np.testing.assert_allclose(pooled.data, hidden.data.mean(axis=0), atol=1e-12)


def test_step_logprobs_normalized(generator):
    lp = generator.step_logprobs(PROMPT, [BOS_ID, 7])
    assert np.exp(lp).sum() == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("family", ["encoder_decoder", "decoder_only"])
def test_gradcheck_generator(family):
    assert check_generator(0, family).max_rel_err < 1e-4
