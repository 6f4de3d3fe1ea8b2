"""Desk-scale transformer blocks: text-pair encoder, patch image encoder,
and prompt-conditioned generators (encoder-decoder and decoder-only).

All blocks are pre-norm transformers over float64 tensors. Sequences are
processed one sample at a time, so no padding is ever inserted by the
blocks themselves; when an input does carry PAD ids (e.g. cached batches),
those positions are masked out of attention and pooling.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import BOS_ID, EOS_ID, PAD_ID, SequencePairInput, truncate_pair


@dataclass(frozen=True)
class BlockConfig:
    """Transformer stack dimensions."""

    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int = 128
    max_len: int = 128
    vocab_size: int = 64

    def __post_init__(self):
        fields = ("d_model", "n_layers", "n_heads", "d_ff", "max_len", "vocab_size")
        for name in fields:
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.d_model % self.n_heads != 0:
            raise ValueError(
                f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class Module:
    """Minimal parameter container with stable, dotted parameter names."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._children: dict[str, Module] = {}

    def param(self, name: str, array: np.ndarray) -> Tensor:
        t = Tensor(array, requires_grad=True)
        self._params[name] = t
        return t

    def child(self, name: str, module: "Module") -> "Module":
        self._children[name] = module
        return module

    def parameters(self) -> dict[str, Tensor]:
        out = dict(self._params)
        for cname, c in self._children.items():
            for k, v in c.parameters().items():
                out[f"{cname}.{k}"] = v
        return out

    def zero_grad(self) -> None:
        for p in self.parameters().values():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.parameters().items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = self.parameters()
        missing = set(params) - set(state)
        extra = set(state) - set(params)
        if missing or extra:
            raise ValueError(f"state mismatch: missing={sorted(missing)} extra={sorted(extra)}")
        for k, p in params.items():
            arr = np.asarray(state[k], dtype=np.float64)
            if arr.shape != p.shape:
                raise ValueError(f"shape mismatch for {k}: {arr.shape} vs {p.shape}")
            p.data = arr.copy()


class Linear(Module):
    def __init__(self, rng: np.random.Generator, d_in: int, d_out: int):
        super().__init__()
        self.w = self.param("w", glorot(rng, d_in, d_out))
        self.b = self.param("b", np.zeros(d_out))

    def __call__(self, x: Tensor) -> Tensor:
        if x.ndim == 1:
            return ad.add(ad.reshape(ad.matmul(ad.reshape(x, (1, -1)), self.w), (-1,)), self.b)
        return ad.add(ad.matmul(x, self.w), self.b)


class LayerNorm(Module):
    def __init__(self, d: int):
        super().__init__()
        self.gain = self.param("gain", np.ones(d))
        self.bias = self.param("bias", np.zeros(d))

    def __call__(self, x: Tensor) -> Tensor:
        return ad.layer_norm(x, self.gain, self.bias)


class MultiHeadAttention(Module):
    """Scaled dot-product attention; self- or cross- depending on inputs."""

    def __init__(self, rng: np.random.Generator, d_model: int, n_heads: int):
        super().__init__()
        if d_model % n_heads != 0:
            raise ValueError(f"d_model {d_model} not divisible by n_heads {n_heads}")
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.wq = self.child("wq", Linear(rng, d_model, d_model))
        self.wk = self.child("wk", Linear(rng, d_model, d_model))
        self.wv = self.child("wv", Linear(rng, d_model, d_model))
        self.wo = self.child("wo", Linear(rng, d_model, d_model))

    def _split(self, x: Tensor, length: int) -> Tensor:
        return ad.transpose(ad.reshape(x, (length, self.n_heads, self.d_head)), (1, 0, 2))

    def __call__(self, queries: Tensor, keys_values: Tensor,
                 mask: np.ndarray | None = None) -> Tensor:
        lq, lk = queries.shape[0], keys_values.shape[0]
        q = self._split(self.wq(queries), lq)
        k = self._split(self.wk(keys_values), lk)
        v = self._split(self.wv(keys_values), lk)
        scores = ad.scale(ad.matmul(q, ad.transpose(k, (0, 2, 1))), 1.0 / np.sqrt(self.d_head))
        if mask is not None:
            scores = ad.add(scores, ad.constant(mask[None, :, :]))
        ctx = ad.matmul(ad.softmax(scores, axis=-1), v)
        merged = ad.reshape(ad.transpose(ctx, (1, 0, 2)), (lq, self.n_heads * self.d_head))
        return self.wo(merged)


class FeedForward(Module):
    def __init__(self, rng: np.random.Generator, d_model: int, d_ff: int):
        super().__init__()
        self.w1 = self.child("w1", Linear(rng, d_model, d_ff))
        self.w2 = self.child("w2", Linear(rng, d_ff, d_model))

    def __call__(self, x: Tensor) -> Tensor:
        return self.w2(ad.gelu(self.w1(x)))


class EncoderLayer(Module):
    def __init__(self, rng: np.random.Generator, cfg: BlockConfig):
        super().__init__()
        self.ln1 = self.child("ln1", LayerNorm(cfg.d_model))
        self.attn = self.child("attn", MultiHeadAttention(rng, cfg.d_model, cfg.n_heads))
        self.ln2 = self.child("ln2", LayerNorm(cfg.d_model))
        self.ffn = self.child("ffn", FeedForward(rng, cfg.d_model, cfg.d_ff))

    def __call__(self, x: Tensor, mask: np.ndarray | None) -> Tensor:
        h = self.ln1(x)
        x = ad.add(x, self.attn(h, h, mask))
        return ad.add(x, self.ffn(self.ln2(x)))


class DecoderLayer(Module):
    def __init__(self, rng: np.random.Generator, cfg: BlockConfig, cross: bool = True):
        super().__init__()
        self.ln1 = self.child("ln1", LayerNorm(cfg.d_model))
        self.self_attn = self.child("self_attn",
                                    MultiHeadAttention(rng, cfg.d_model, cfg.n_heads))
        self.cross_attn = None
        if cross:
            self.ln_cross = self.child("ln_cross", LayerNorm(cfg.d_model))
            self.cross_attn = self.child("cross_attn",
                                         MultiHeadAttention(rng, cfg.d_model, cfg.n_heads))
        self.ln2 = self.child("ln2", LayerNorm(cfg.d_model))
        self.ffn = self.child("ffn", FeedForward(rng, cfg.d_model, cfg.d_ff))

    def __call__(self, x: Tensor, causal_mask: np.ndarray,
                 memory: Tensor | None = None,
                 memory_mask: np.ndarray | None = None) -> Tensor:
        h = self.ln1(x)
        x = ad.add(x, self.self_attn(h, h, causal_mask))
        if self.cross_attn is not None and memory is not None:
            x = ad.add(x, self.cross_attn(self.ln_cross(x), memory, memory_mask))
        return ad.add(x, self.ffn(self.ln2(x)))


class TokenStack(Module):
    """Token + learned position embeddings feeding a stack of encoder layers."""

    def __init__(self, rng: np.random.Generator, cfg: BlockConfig):
        super().__init__()
        self.cfg = cfg
        self.tok_emb = self.param("tok_emb", glorot(rng, cfg.vocab_size, cfg.d_model))
        self.pos_emb = self.param("pos_emb", glorot(rng, cfg.max_len, cfg.d_model))
        self.layers = [self.child(f"layer{i}", EncoderLayer(rng, cfg))
                       for i in range(cfg.n_layers)]
        self.ln_out = self.child("ln_out", LayerNorm(cfg.d_model))

    def __call__(self, ids: np.ndarray) -> tuple[Tensor, np.ndarray]:
        ids = np.asarray(ids, dtype=np.intp)
        if ids.size == 0:
            raise ValueError("cannot encode an empty sequence")
        if ids.size > self.cfg.max_len:
            raise ValueError(f"sequence length {ids.size} exceeds max_len {self.cfg.max_len}")
        keep = ids != PAD_ID
        x = ad.add(ad.embedding_lookup(self.tok_emb, ids),
                   ad.embedding_lookup(self.pos_emb, np.arange(ids.size)))
        mask = ad.attention_mask(key_keep=keep, query_len=ids.size)
        for layer in self.layers:
            x = layer(x, mask)
        return self.ln_out(x), keep


class TextPairEncoder(Module):
    """Encoder over [CLS] A [SEP] B [SEP]; pools hidden states into one vector."""

    def __init__(self, rng: np.random.Generator, cfg: BlockConfig):
        super().__init__()
        self.cfg = cfg
        self.stack = self.child("stack", TokenStack(rng, cfg))

    def encode(self, pair: SequencePairInput) -> tuple[Tensor, Tensor, tuple[int, int]]:
        """Returns (hidden states, pooled vector, (dropped_a, dropped_b))."""
        pair, dropped_a, dropped_b = truncate_pair(pair, self.cfg.max_len)
        if dropped_a or dropped_b:
            logging.getLogger(__name__).warning(
                "pair input truncated: dropped %d A-side and %d B-side tokens",
                dropped_a, dropped_b)
        hidden, keep = self.stack(np.array(pair.token_ids))
        pooled = ad.masked_mean(hidden, keep)
        return hidden, pooled, (dropped_a, dropped_b)


def encode_pair(pair: SequencePairInput, enc: TextPairEncoder) -> tuple[Tensor, Tensor]:
    hidden, pooled, _ = enc.encode(pair)
    return hidden, pooled


class PatchImageEncoder(Module):
    """Splits an image into square patches and encodes them like tokens."""

    def __init__(self, rng: np.random.Generator, cfg: BlockConfig, patch_size: int):
        super().__init__()
        self.cfg = cfg
        self.patch_size = patch_size
        self.patch_proj = self.child("patch_proj",
                                     Linear(rng, patch_size * patch_size * 3, cfg.d_model))
        self.pos_emb = self.param("pos_emb", glorot(rng, cfg.max_len, cfg.d_model))
        self.layers = [self.child(f"layer{i}", EncoderLayer(rng, cfg))
                       for i in range(cfg.n_layers)]
        self.ln_out = self.child("ln_out", LayerNorm(cfg.d_model))

    def patchify(self, image: np.ndarray) -> np.ndarray:
        h, w, c = image.shape
        p = self.patch_size
        if h % p or w % p:
            need_h = (p - h % p) % p
            need_w = (p - w % p) % p
            raise ValueError(
                f"image {h}x{w} not divisible by patch size {p}; "
                f"pad to {h + need_h}x{w + need_w}")
        grid = image.reshape(h // p, p, w // p, p, c)
        patches = grid.transpose(0, 2, 1, 3, 4).reshape(-1, p * p * c)
        return patches.astype(np.float64) / 255.0

    def encode(self, image: np.ndarray) -> Tensor:
        patches = self.patchify(image)
        n = patches.shape[0]
        if n > self.cfg.max_len:
            raise ValueError(f"{n} patches exceed max_len {self.cfg.max_len}")
        x = ad.add(self.patch_proj(ad.constant(patches)),
                   ad.embedding_lookup(self.pos_emb, np.arange(n)))
        for layer in self.layers:
            x = layer(x, None)
        return ad.mean_pool(self.ln_out(x), axis=0)


def encode_image(image: np.ndarray, enc: PatchImageEncoder) -> Tensor:
    return enc.encode(image)


def _validate_target(target_ids: np.ndarray, allowed_ids: set[int] | None) -> None:
    if target_ids.size == 0:
        raise ValueError("empty generation target")
    if target_ids[0] != BOS_ID:
        raise ValueError("generation target must begin with BOS")
    # A restricted output support that excludes EOS (degenerate diagnostic
    # setups) is the one case where the trailing EOS is waived.
    if target_ids[-1] != EOS_ID and (allowed_ids is None or EOS_ID in allowed_ids):
        raise ValueError("generation target must end with EOS")
    if target_ids.size < 2:
        raise ValueError("generation target has no steps")


def _restrict_logits(logits: Tensor, allowed_ids: set[int] | None,
                     vocab_size: int) -> Tensor:
    if allowed_ids is None:
        return logits
    mask = np.full(vocab_size, ad.MASK_NEG)
    mask[sorted(allowed_ids)] = 0.0
    return ad.add(logits, ad.constant(mask))


class PromptedGenerator(Module):
    """Encoder-decoder generator conditioned on a rendered prompt."""

    family = "encoder_decoder"

    def __init__(self, rng: np.random.Generator, cfg: BlockConfig):
        super().__init__()
        self.cfg = cfg
        self.encoder = self.child("encoder", TokenStack(rng, cfg))
        self.dec_tok_emb = self.param("dec_tok_emb", glorot(rng, cfg.vocab_size, cfg.d_model))
        self.dec_pos_emb = self.param("dec_pos_emb", glorot(rng, cfg.max_len, cfg.d_model))
        self.dec_layers = [self.child(f"dec_layer{i}", DecoderLayer(rng, cfg, cross=True))
                           for i in range(cfg.n_layers)]
        self.dec_ln = self.child("dec_ln", LayerNorm(cfg.d_model))
        self.out_proj = self.child("out_proj", Linear(rng, cfg.d_model, cfg.vocab_size))

    def encode_prompt(self, prompt_ids) -> tuple[Tensor, np.ndarray]:
        return self.encoder(np.asarray(prompt_ids, dtype=np.intp))

    def _decode_hidden(self, dec_ids: np.ndarray, memory: Tensor,
                       mem_keep: np.ndarray) -> Tensor:
        n = dec_ids.size
        if n > self.cfg.max_len:
            raise ValueError(f"decoder length {n} exceeds max_len {self.cfg.max_len}")
        x = ad.add(ad.embedding_lookup(self.dec_tok_emb, dec_ids),
                   ad.embedding_lookup(self.dec_pos_emb, np.arange(n)))
        causal = ad.attention_mask(causal_len=n)
        mem_mask = ad.attention_mask(key_keep=mem_keep, query_len=n)
        for layer in self.dec_layers:
            x = layer(x, causal, memory, mem_mask)
        return self.dec_ln(x)

    def teacher_forced(self, prompt_ids, target_ids, allowed_ids: set[int] | None = None
                       ) -> tuple[np.ndarray, Tensor, Tensor]:
        """Teacher-forced pass: returns (per-step distributions over the
        vocabulary, pooled decoder states, mean negative log likelihood).

        The loss averages -log p(y_t | y_<t, prompt) over the steps, so its
        scale does not grow with target length.
        """
        target_ids = np.asarray(target_ids, dtype=np.intp)
        _validate_target(target_ids, allowed_ids)
        memory, mem_keep = self.encode_prompt(prompt_ids)
        dec_in = target_ids[:-1]
        hidden = self._decode_hidden(dec_in, memory, mem_keep)
        logits = _restrict_logits(self.out_proj(hidden), allowed_ids, self.cfg.vocab_size)
        loss = ad.cross_entropy(logits, target_ids[1:])
        pooled = ad.mean_pool(hidden, axis=0)
        probs = ad.softmax(logits, axis=-1).data
        return probs, pooled, loss

    def step_logprobs(self, prompt_ids, prefix_ids) -> np.ndarray:
        """Log-distribution over the next token after prefix (BOS first)."""
        with ad.no_grad():
            memory, mem_keep = self.encode_prompt(prompt_ids)
            hidden = self._decode_hidden(np.asarray(prefix_ids, dtype=np.intp),
                                         memory, mem_keep)
            logits = self.out_proj(hidden).data[-1]
        z = logits - logits.max()
        return z - np.log(np.exp(z).sum())


class DecoderOnlyGenerator(Module):
    """Causal generator that prefixes prompt tokens to the target stream."""

    family = "decoder_only"

    def __init__(self, rng: np.random.Generator, cfg: BlockConfig):
        super().__init__()
        self.cfg = cfg
        self.tok_emb = self.param("tok_emb", glorot(rng, cfg.vocab_size, cfg.d_model))
        self.pos_emb = self.param("pos_emb", glorot(rng, cfg.max_len, cfg.d_model))
        self.layers = [self.child(f"layer{i}", DecoderLayer(rng, cfg, cross=False))
                       for i in range(cfg.n_layers)]
        self.ln_out = self.child("ln_out", LayerNorm(cfg.d_model))
        self.out_proj = self.child("out_proj", Linear(rng, cfg.d_model, cfg.vocab_size))

    def _hidden(self, ids: np.ndarray) -> Tensor:
        n = ids.size
        if n > self.cfg.max_len:
            raise ValueError(f"sequence length {n} exceeds max_len {self.cfg.max_len}")
        x = ad.add(ad.embedding_lookup(self.tok_emb, ids),
                   ad.embedding_lookup(self.pos_emb, np.arange(n)))
        causal = ad.attention_mask(causal_len=n)
        for layer in self.layers:
            x = layer(x, causal)
        return self.ln_out(x)

    def teacher_forced(self, prompt_ids, target_ids, allowed_ids: set[int] | None = None
                       ) -> tuple[np.ndarray, Tensor, Tensor]:
        prompt_ids = np.asarray(prompt_ids, dtype=np.intp)
        target_ids = np.asarray(target_ids, dtype=np.intp)
        _validate_target(target_ids, allowed_ids)
        seq = np.concatenate([prompt_ids, target_ids])
        hidden = self._hidden(seq[:-1])
        t_steps = target_ids.size - 1
        step_hidden = ad.narrow(hidden, prompt_ids.size, t_steps)
        logits = _restrict_logits(self.out_proj(step_hidden), allowed_ids,
                                  self.cfg.vocab_size)
        loss = ad.cross_entropy(logits, target_ids[1:])
        pooled = ad.mean_pool(step_hidden, axis=0)
        probs = ad.softmax(logits, axis=-1).data
        return probs, pooled, loss

    def step_logprobs(self, prompt_ids, prefix_ids) -> np.ndarray:
        with ad.no_grad():
            seq = np.concatenate([np.asarray(prompt_ids, dtype=np.intp),
                                  np.asarray(prefix_ids, dtype=np.intp)])
            logits = self.out_proj(self._hidden(seq)).data[-1]
        z = logits - logits.max()
        return z - np.log(np.exp(z).sum())


def decode_teacher_forced(prompt, target_ids, gen) -> tuple[np.ndarray, Tensor, Tensor]:
    """Convenience wrapper taking a Prompt object."""
    return gen.teacher_forced(np.asarray(prompt.token_ids), target_ids)
