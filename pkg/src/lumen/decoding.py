"""Free-running generation: greedy and beam search.

Both strategies take any generator exposing `step_logprobs(prompt_ids,
prefix_ids) -> log-probability vector`. Reserved ids other than EOS are
never emitted; a returned sequence ends with EOS unless the length cap
stopped it first.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import MASK_NEG
from .data import BOS_ID, CLS_ID, EOS_ID, PAD_ID, SEP_ID, UNK_ID

BLOCKED_OUTPUT_IDS = (PAD_ID, UNK_ID, BOS_ID, SEP_ID, CLS_ID)


@dataclass(frozen=True)
class DecodeConfig:
    strategy: str = "greedy"
    beam_width: int = 1
    max_len: int = 32
    alpha: float = 0.7  # length-normalization exponent

    def __post_init__(self):
        if self.strategy not in ("greedy", "beam"):
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.beam_width < 1:
            raise ValueError("beam width must be >= 1")
        if self.max_len < 1:
            raise ValueError("max length must be >= 1")


def _masked_logprobs(gen, prompt_ids, prefix: tuple[int, ...]) -> np.ndarray:
    lp = np.array(gen.step_logprobs(prompt_ids, list(prefix)), dtype=np.float64)
    lp[list(BLOCKED_OUTPUT_IDS)] = MASK_NEG
    return lp


def greedy_decode(prompt, gen, cfg: DecodeConfig | None = None) -> list[int]:
    """Argmax token per step from BOS until EOS or the length cap; ties
    break toward the lowest token id."""
    cfg = cfg or DecodeConfig()
    prompt_ids = _prompt_ids(prompt)
    prefix: tuple[int, ...] = (BOS_ID,)
    out: list[int] = []
    for _ in range(cfg.max_len):
        lp = _masked_logprobs(gen, prompt_ids, prefix)
        tok = int(np.argmax(lp))  # argmax returns the first (lowest id) max
        out.append(tok)
        if tok == EOS_ID:
            break
        prefix = prefix + (tok,)
    return out


@dataclass(frozen=True)
class _Hyp:
    ids: tuple[int, ...]  # generated tokens, BOS excluded
    logp: float
    finished: bool


def _score(h: _Hyp, alpha: float) -> float:
    length = max(1, len(h.ids))
    return h.logp / (length**alpha)


def beam_decode(prompt, gen, cfg: DecodeConfig | None = None) -> list[int]:
    """Beam search maximizing sum(log p) / length^alpha.

    Finished hypotheses stay in the beam and compete with open ones on the
    same normalized score; ties break lexicographically on token ids, which
    makes beam_width=1 coincide with greedy_decode.
    """
    cfg = cfg or DecodeConfig(strategy="beam")
    prompt_ids = _prompt_ids(prompt)
    beam: list[_Hyp] = [_Hyp(ids=(), logp=0.0, finished=False)]
    for _ in range(cfg.max_len):
        if all(h.finished for h in beam):
            break
        candidates: list[_Hyp] = [h for h in beam if h.finished]
        for h in beam:
            if h.finished:
                continue
            lp = _masked_logprobs(gen, prompt_ids, (BOS_ID, *h.ids))
            for tok in np.argsort(-lp, kind="stable")[: 2 * cfg.beam_width]:
                tok = int(tok)
                if lp[tok] <= MASK_NEG / 2:
                    continue
                candidates.append(_Hyp(ids=h.ids + (tok,),
                                       logp=h.logp + float(lp[tok]),
                                       finished=tok == EOS_ID))
        candidates.sort(key=lambda h: (-_score(h, cfg.alpha), h.ids))
        beam = candidates[: cfg.beam_width]
    best = min(beam, key=lambda h: (-_score(h, cfg.alpha), h.ids))
    return list(best.ids)


def decode(prompt, gen, cfg: DecodeConfig) -> list[int]:
    if cfg.strategy == "beam" and cfg.beam_width > 1:
        return beam_decode(prompt, gen, cfg)
    return greedy_decode(prompt, gen, cfg)


def _prompt_ids(prompt) -> np.ndarray:
    ids = prompt.token_ids if hasattr(prompt, "token_ids") else prompt
    return np.asarray(ids, dtype=np.intp)


def sequence_logprob(gen, prompt, ids: list[int]) -> float:
    """Model log-probability of a generated id sequence (BOS excluded)."""
    prompt_ids = _prompt_ids(prompt)
    prefix: tuple[int, ...] = (BOS_ID,)
    total = 0.0
    for tok in ids:
        lp = _masked_logprobs(gen, prompt_ids, prefix)
        total += float(lp[tok])
        prefix = prefix + (tok,)
    return total
