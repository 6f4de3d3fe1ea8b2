"""Single-worker training loop with per-step loss records and checkpoints.

The loop is a deterministic function of (seed, config, corpus): shuffling
uses its own generator seeded from the training seed, and nothing reads the
clock. Per-step records keep the loss breakdown and per-component gradient
norms so ablation properties (e.g. zero gradients on classification heads)
can be audited from the log alone.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .checkpoint import save_checkpoint
from .data import MemeSample, role_index
from .model import Lumen, config_to_dict
from .optim import clip_by_global_norm, make_optimizer


@dataclass(frozen=True)
class TrainingConfig:
    epochs: int = 10
    batch_size: int = 8
    learning_rate: float | None = None  # optimizer default when None
    clip_norm: float = 1.0
    seed: int = 0


@dataclass
class StepRecord:
    step: int
    epoch: int
    l_seq: float
    l_exp: float
    l_rp: float
    l_total: float
    grad_norms: dict[str, float] = field(default_factory=dict)


@dataclass
class EpochRecord:
    epoch: int
    l_seq: float
    l_exp: float
    l_rp: float
    l_total: float
    role_accuracy: float


@dataclass
class TrainingLog:
    steps: list[StepRecord] = field(default_factory=list)
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int | None = None
    best_val_loss: float = math.inf

    def write_jsonl(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for rec in self.epochs:
                fh.write(json.dumps(asdict(rec), sort_keys=True) + "\n")

    def write_steps_jsonl(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for rec in self.steps:
                fh.write(json.dumps(asdict(rec), sort_keys=True) + "\n")


def _group_norms(model: Lumen, grads: dict[str, np.ndarray]) -> dict[str, float]:
    norms: dict[str, float] = {}
    for group, names in model.parameter_groups().items():
        total = 0.0
        for n in names:
            g = grads.get(n)
            if g is not None:
                total += float((g * g).sum())
        norms[group] = math.sqrt(total)
    return norms


@dataclass(frozen=True)
class LossMeans:
    l_seq: float
    l_exp: float
    l_rp: float
    l_total: float


def evaluate_split(model: Lumen, samples: list[MemeSample]) -> tuple[LossMeans, float]:
    """Mean loss breakdown and fused-head role accuracy over a split."""
    sums = np.zeros(4)
    correct = 0
    with ad.no_grad():
        for s in samples:
            fr = model.forward_sample(s)
            b = fr.breakdown
            sums += (b.l_seq, b.l_exp, b.l_rp, b.l_total)
            if fr.classification.predicted == role_index(s.role):
                correct += 1
    n = max(1, len(samples))
    return LossMeans(*(float(x) for x in sums / n)), correct / n


def train(model: Lumen, corpus: list[MemeSample], tcfg: TrainingConfig,
          out_dir: str | Path | None = None) -> TrainingLog:
    """Train on the corpus' train split; validate on its val split
    (falling back to the train split when no val samples exist).

    Returns the log; with out_dir set, writes epoch/step logs and
    best/last checkpoints there.
    """
    train_split = [s for s in corpus if s.split == "train"]
    val_split = [s for s in corpus if s.split == "val"] or train_split
    if tcfg.epochs > 0 and not train_split:
        raise ValueError("empty train split")
    params = model.parameters()
    optimizer = make_optimizer(model.cfg.optimizer, tcfg.learning_rate)
    shuffle_rng = np.random.default_rng(tcfg.seed)
    log = TrainingLog()
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    step = 0
    for epoch in range(tcfg.epochs):
        order = shuffle_rng.permutation(len(train_split))
        for start in range(0, len(order), tcfg.batch_size):
            batch = [train_split[i] for i in order[start : start + tcfg.batch_size]]
            batch_grads: dict[str, np.ndarray] = {}
            sums = np.zeros(4)
            for sample in batch:
                model.zero_grad()
                fr = model.forward_sample(sample)
                ad.backward(fr.loss_total)
                for name, p in params.items():
                    if p.grad is not None:
                        if name in batch_grads:
                            batch_grads[name] += p.grad
                        else:
                            batch_grads[name] = p.grad.copy()
                b = fr.breakdown
                sums += (b.l_seq, b.l_exp, b.l_rp, b.l_total)
            n = len(batch)
            batch_grads = {k: g / n for k, g in batch_grads.items()}
            norms = _group_norms(model, batch_grads)
            clipped = clip_by_global_norm(batch_grads, tcfg.clip_norm)
            optimizer.step(params, clipped)
            step += 1
            means = [float(x) for x in sums / n]
            log.steps.append(StepRecord(step=step, epoch=epoch,
                                        l_seq=means[0], l_exp=means[1],
                                        l_rp=means[2], l_total=means[3],
                                        grad_norms=norms))
        val_means, accuracy = evaluate_split(model, val_split)
        log.epochs.append(EpochRecord(epoch=epoch, l_seq=val_means.l_seq,
                                      l_exp=val_means.l_exp, l_rp=val_means.l_rp,
                                      l_total=val_means.l_total,
                                      role_accuracy=accuracy))
        if val_means.l_total < log.best_val_loss:
            log.best_val_loss = val_means.l_total
            log.best_epoch = epoch
            if out_dir is not None:
                _save(model, out_dir / "best.ckpt", epoch)
    if out_dir is not None:
        _save(model, out_dir / "last.ckpt", tcfg.epochs - 1)
        if not (out_dir / "best.ckpt").exists():
            _save(model, out_dir / "best.ckpt", tcfg.epochs - 1)
        log.write_jsonl(out_dir / "train_log.jsonl")
        log.write_steps_jsonl(out_dir / "train_steps.jsonl")
    return log


def _save(model: Lumen, path: Path, epoch: int) -> None:
    meta = {
        "model_config": config_to_dict(model.cfg),
        "vocab_tokens": model.vocab.id_to_token,
        "epoch": epoch,
    }
    save_checkpoint(path, model.state_dict(), meta)


def load_model(path: str | Path) -> Lumen:
    """Rebuild a model (config + vocabulary + weights) from a checkpoint."""
    from .checkpoint import load_checkpoint
    from .data import N_RESERVED, Vocabulary
    from .model import config_from_dict

    state, meta = load_checkpoint(path)
    vocab = Vocabulary(meta["vocab_tokens"][N_RESERVED:])
    model = Lumen(config_from_dict(meta["model_config"]), vocab, seed=0)
    model.load_state_dict(state)
    return model
