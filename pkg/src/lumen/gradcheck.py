"""Central finite-difference gradient checks for blocks and the full model.

The check perturbs sampled parameter coordinates by +/- h (1e-3), rebuilds
the forward pass, and compares (f+ - f-) / 2h against the recorded
analytic gradient. Error is normalized as |a - n| / max(1, |a|, |n|), i.e.
relative at gradient scale and absolute below it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .blocks import BlockConfig, DecoderOnlyGenerator, PatchImageEncoder, \
    PromptedGenerator, TextPairEncoder
from .data import BOS_ID, EOS_ID, N_RESERVED, SequencePairInput, CLS_ID, SEP_ID
from .model import Lumen, LumenConfig
from .synth import SyntheticSpec, generate_synthetic_corpus
from .data import Vocabulary

FD_STEP = 1e-3
TOLERANCE = 1e-4


@dataclass
class GradCheckResult:
    name: str
    max_rel_err: float
    n_coords: int

    @property
    def passed(self) -> bool:
        return self.max_rel_err < TOLERANCE


def check_gradients(build_loss, params: dict[str, ad.Tensor],
                    rng: np.random.Generator, name: str = "loss",
                    max_coords_per_param: int = 6, h: float = FD_STEP) -> GradCheckResult:
    """Compare analytic gradients of `build_loss()` with central differences
    over a seeded sample of coordinates of every parameter."""
    loss = build_loss()
    ad.backward(loss)
    analytic = {k: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
                for k, p in params.items()}
    worst = 0.0
    n_checked = 0
    for key, p in params.items():
        flat = p.data.reshape(-1)
        n = flat.size
        if n <= max_coords_per_param:
            coords = np.arange(n)
        else:
            coords = rng.choice(n, size=max_coords_per_param, replace=False)
        for c in coords:
            orig = flat[c]
            flat[c] = orig + h
            up = float(build_loss().data)
            flat[c] = orig - h
            down = float(build_loss().data)
            flat[c] = orig
            numeric = (up - down) / (2.0 * h)
            a = float(analytic[key].reshape(-1)[c])
            err = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
            worst = max(worst, err)
            n_checked += 1
    return GradCheckResult(name=name, max_rel_err=worst, n_coords=n_checked)


def _tiny_block(vocab_size: int) -> BlockConfig:
    return BlockConfig(d_model=8, n_layers=1, n_heads=2, d_ff=12, max_len=32,
                       vocab_size=vocab_size)


def _random_ids(rng: np.random.Generator, length: int, vocab_size: int) -> np.ndarray:
    return rng.integers(N_RESERVED, vocab_size, size=length)


def check_text_pair_encoder(seed: int) -> GradCheckResult:
    rng = np.random.default_rng(seed)
    vocab_size = 14
    enc = TextPairEncoder(rng, _tiny_block(vocab_size))
    a = _random_ids(rng, 4, vocab_size)
    b = _random_ids(rng, 2, vocab_size)
    pair = SequencePairInput((CLS_ID, *a, SEP_ID, *b, SEP_ID), len(a), len(b))
    probe = ad.constant(rng.standard_normal(enc.cfg.d_model))

    def loss():
        _, pooled, _ = enc.encode(pair)
        return ad.sum_(ad.mul(pooled, probe))

    return check_gradients(loss, enc.parameters(), rng, "text_pair_encoder")


def check_patch_encoder(seed: int) -> GradCheckResult:
    rng = np.random.default_rng(seed)
    enc = PatchImageEncoder(rng, _tiny_block(8), patch_size=4)
    image = rng.integers(0, 256, size=(8, 8, 3)).astype(np.uint8)
    probe = ad.constant(rng.standard_normal(enc.cfg.d_model))

    def loss():
        return ad.sum_(ad.mul(enc.encode(image), probe))

    return check_gradients(loss, enc.parameters(), rng, "patch_image_encoder")


def check_generator(seed: int, family: str = "encoder_decoder") -> GradCheckResult:
    rng = np.random.default_rng(seed)
    vocab_size = 14
    cls = PromptedGenerator if family == "encoder_decoder" else DecoderOnlyGenerator
    gen = cls(rng, _tiny_block(vocab_size))
    prompt = _random_ids(rng, 5, vocab_size)
    target = np.array([BOS_ID, *_random_ids(rng, 3, vocab_size), EOS_ID])

    def loss():
        _, pooled, l_exp = gen.teacher_forced(prompt, target)
        return ad.add(l_exp, ad.sum_(ad.mul(pooled, ad.constant(np.full(gen.cfg.d_model, 0.1)))))

    return check_gradients(loss, gen.parameters(), rng, f"generator_{family}")


def _tiny_model(seed: int, **overrides) -> tuple[Lumen, list]:
    corpus = generate_synthetic_corpus(
        SyntheticSpec(seed=seed, per_role=(1, 1, 1), image_size=8, patch_size=4))
    vocab = Vocabulary.build(corpus)
    block = BlockConfig(d_model=8, n_layers=1, n_heads=2, d_ff=12, max_len=64,
                        vocab_size=len(vocab))
    cfg = LumenConfig(entity_block=block, visual_block=block, generator_block=block,
                      fusion_width=8, fusion_heads=2, image_size=8, patch_size=4,
                      **overrides)
    return Lumen(cfg, vocab, seed=seed), corpus


def check_model(seed: int, **overrides) -> GradCheckResult:
    """Gradcheck through the composed joint loss on a synthetic sample."""
    model, corpus = _tiny_model(seed, **overrides)
    sample = corpus[seed % len(corpus)]

    def loss():
        return model.forward_sample(sample).loss_total

    rng = np.random.default_rng(seed + 1)
    name = "lumen_joint_loss" + ("" if not overrides else f"_{sorted(overrides)}")
    return check_gradients(loss, model.parameters(), rng, name,
                           max_coords_per_param=4)


def run_all(seeds: list[int]) -> list[GradCheckResult]:
    """The full check battery over the given seeds."""
    results = []
    for seed in seeds:
        results.append(check_text_pair_encoder(seed))
        results.append(check_patch_encoder(seed))
        results.append(check_generator(seed, "encoder_decoder"))
        results.append(check_generator(seed, "decoder_only"))
        results.append(check_model(seed))
    results.append(check_model(seeds[0], fusion_mode="self_attend"))
    results.append(check_model(seeds[0], loss_weighting="unweighted"))
    return results
