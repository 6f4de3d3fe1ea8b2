"""The multi-task model: three branches, fusion head, and joint objective.

Branches produce pooled vectors (visual V_h, entity-pair T_h, generator
E_h). The entity branch carries its own 3-way head (sequence-classification
loss), the generator contributes a teacher-forced language-modeling loss,
and the fusion head classifies the role from the projected, concatenated
branch vectors (role-prediction loss). The joint objective is the weighted
sum of the enabled losses.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .blocks import (BlockConfig, DecoderOnlyGenerator, Linear, Module,
                     MultiHeadAttention, PatchImageEncoder, PromptedGenerator,
                     TextPairEncoder)
from .data import MemeSample, Vocabulary, build_pair_input, build_prompt, \
    encode_explanation, role_index

FUSION_MODES = ("concat", "self_attend")
OPTIMIZERS = ("adafactor", "adam")
LOSS_WEIGHTINGS = ("weighted", "unweighted")
DECODER_FAMILIES = ("encoder_decoder", "decoder_only")

DEFAULT_BETAS = (0.2, 0.5, 0.3)  # sequence, explanation, role-prediction


@dataclass(frozen=True)
class LumenConfig:
    """Model shape and behaviour switches.

    Branch dimensions follow the three block configs; the documented
    full-scale dimensionalities (visual 768, entity 1536, generator 1024,
    fusion 512) are available through `paper_dims`, while the defaults are
    desk scale.
    """

    entity_block: BlockConfig = field(default_factory=BlockConfig)
    visual_block: BlockConfig = field(default_factory=BlockConfig)
    generator_block: BlockConfig = field(default_factory=BlockConfig)
    fusion_width: int = 512
    fusion_heads: int = 4
    n_classes: int = 3
    betas: tuple[float, float, float] = DEFAULT_BETAS
    use_visual: bool = True
    use_entity: bool = True
    use_generator: bool = True
    fusion_mode: str = "concat"
    optimizer: str = "adafactor"
    loss_weighting: str = "weighted"
    decoder_family: str = "encoder_decoder"
    use_captions: bool = True
    image_size: int = 32
    patch_size: int = 8

    def __post_init__(self):
        if self.n_classes != 3:
            raise ValueError("the role label space has exactly 3 classes")
        if any(b < 0 for b in self.betas):
            raise ValueError(f"betas must be non-negative: {self.betas}")
        if not (self.use_visual or self.use_entity or self.use_generator):
            raise ValueError("at least one branch must be enabled")
        if self.fusion_mode not in FUSION_MODES:
            raise ValueError(f"fusion_mode must be one of {FUSION_MODES}")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")
        if self.loss_weighting not in LOSS_WEIGHTINGS:
            raise ValueError(f"loss_weighting must be one of {LOSS_WEIGHTINGS}")
        if self.decoder_family not in DECODER_FAMILIES:
            raise ValueError(f"decoder_family must be one of {DECODER_FAMILIES}")
        if self.fusion_width % self.fusion_heads != 0:
            raise ValueError("fusion_width must be divisible by fusion_heads")
        if self.image_size % self.patch_size != 0:
            raise ValueError("image_size must be divisible by patch_size")

    @property
    def d_visual(self) -> int:
        return self.visual_block.d_model

    @property
    def d_entity(self) -> int:
        return self.entity_block.d_model

    @property
    def d_generator(self) -> int:
        return self.generator_block.d_model

    @classmethod
    def desk(cls, vocab_size: int, **overrides) -> "LumenConfig":
        """Laptop-scale defaults: d_model 64, 2 layers, 4 heads, FFN 128."""
        block = BlockConfig(d_model=64, n_layers=2, n_heads=4, d_ff=128,
                            max_len=128, vocab_size=vocab_size)
        cfg = cls(entity_block=block, visual_block=block, generator_block=block,
                  fusion_width=64, fusion_heads=4)
        return replace(cfg, **overrides) if overrides else cfg

    @classmethod
    def paper_dims(cls, vocab_size: int) -> "LumenConfig":
        """Full-scale branch widths (768/1536/1024, fusion 512) for
        documentation parity; layer counts stay at desk scale."""
        def block(d, heads):
            return BlockConfig(d_model=d, n_layers=2, n_heads=heads, d_ff=2 * d,
                               max_len=128, vocab_size=vocab_size)
        return cls(entity_block=block(1536, 8), visual_block=block(768, 8),
                   generator_block=block(1024, 8), fusion_width=512)


@dataclass
class BranchOutputs:
    """Pooled branch vectors; absent branches hold None."""

    v_h: Tensor | None = None
    t_h: Tensor | None = None
    e_h: Tensor | None = None


@dataclass
class ClassificationOutput:
    """Fused 3-way classification: logits, probabilities, one-hot target."""

    logits: Tensor
    probabilities: np.ndarray
    target_onehot: np.ndarray

    @property
    def predicted(self) -> int:
        return int(np.argmax(self.probabilities))


@dataclass(frozen=True)
class LossBreakdown:
    """Scalar loss values for logging; disabled terms contribute 0."""

    l_seq: float
    l_exp: float
    l_rp: float
    l_total: float


@dataclass
class ForwardResult:
    branches: BranchOutputs
    classification: ClassificationOutput | None
    loss_seq: Tensor | None
    loss_exp: Tensor | None
    loss_rp: Tensor | None
    loss_total: Tensor
    breakdown: LossBreakdown
    step_probs: np.ndarray | None = None


class FusionHead(Module):
    """Projects each present branch vector to a shared width, combines them
    (concatenation + condensation, or one self-attention layer over the
    projections), and emits 3 logits."""

    def __init__(self, rng: np.random.Generator, cfg: LumenConfig):
        super().__init__()
        self.cfg = cfg
        dims = []
        if cfg.use_visual:
            self.proj_v = self.child("proj_v", Linear(rng, cfg.d_visual, cfg.fusion_width))
            dims.append(cfg.d_visual)
        if cfg.use_entity:
            self.proj_t = self.child("proj_t", Linear(rng, cfg.d_entity, cfg.fusion_width))
            dims.append(cfg.d_entity)
        if cfg.use_generator:
            self.proj_e = self.child("proj_e", Linear(rng, cfg.d_generator, cfg.fusion_width))
            dims.append(cfg.d_generator)
        self.n_branches = len(dims)
        if cfg.fusion_mode == "self_attend":
            self.attn = self.child("attn", MultiHeadAttention(rng, cfg.fusion_width,
                                                              cfg.fusion_heads))
            condense_in = cfg.fusion_width
        else:
            condense_in = self.n_branches * cfg.fusion_width
        self.concat_width = self.n_branches * cfg.fusion_width
        self.condense = self.child("condense", Linear(rng, condense_in, cfg.fusion_width))
        self.out = self.child("out", Linear(rng, cfg.fusion_width, cfg.n_classes))

    def _projections(self, branches: BranchOutputs) -> list[Tensor]:
        parts = []
        if self.cfg.use_visual:
            if branches.v_h is None:
                raise ValueError("visual branch enabled but V_h is absent")
            parts.append(ad.gelu(self.proj_v(branches.v_h)))
        if self.cfg.use_entity:
            if branches.t_h is None:
                raise ValueError("entity branch enabled but T_h is absent")
            parts.append(ad.gelu(self.proj_t(branches.t_h)))
        if self.cfg.use_generator:
            if branches.e_h is None:
                raise ValueError("generator branch enabled but E_h is absent")
            parts.append(ad.gelu(self.proj_e(branches.e_h)))
        return parts

    def __call__(self, branches: BranchOutputs) -> Tensor:
        parts = self._projections(branches)
        if self.cfg.fusion_mode == "self_attend":
            seq = ad.concat([ad.reshape(p, (1, -1)) for p in parts], axis=0)
            attended = ad.add(seq, self.attn(seq, seq))
            fused = ad.mean_pool(attended, axis=0)
        else:
            fused = ad.concat(parts, axis=0)
        condensed = ad.gelu(self.condense(fused))
        return self.out(condensed)


def fuse_classify(branches: BranchOutputs, head: FusionHead,
                  target: int | None = None) -> ClassificationOutput:
    logits = head(branches)
    probs = ad.softmax(logits, axis=-1).data
    onehot = np.zeros(head.cfg.n_classes)
    if target is not None:
        onehot[target] = 1.0
    return ClassificationOutput(logits=logits, probabilities=probs, target_onehot=onehot)


def loss_seq(logits: Tensor, target: int) -> Tensor:
    """Cross-entropy of the entity branch's own 3-way head."""
    return ad.cross_entropy(logits, target)


def loss_rp(cls_out: ClassificationOutput, target: int) -> Tensor:
    """Cross-entropy over the fused logits."""
    return ad.cross_entropy(cls_out.logits, target)


def joint_loss(l_seq: Tensor | None, l_exp: Tensor | None, l_rp: Tensor | None,
               betas: tuple[float, float, float],
               weighting: str = "weighted") -> tuple[Tensor, LossBreakdown]:
    """Combine enabled loss terms.

    weighted:   beta1*L_seq + beta2*L_exp + beta3*L_rp, skipping disabled
                terms and terms whose beta is 0 (they contribute nothing and
                receive no gradient).
    unweighted: plain mean of the enabled terms, betas ignored.
    """
    terms = [(l_seq, betas[0]), (l_exp, betas[1]), (l_rp, betas[2])]
    if weighting == "weighted":
        active = [(t, b) for t, b in terms if t is not None and b != 0.0]
    else:
        active = [(t, 1.0) for t, _ in terms if t is not None]
    if not active:
        raise ValueError("joint loss has no enabled terms")
    total: Tensor | None = None
    for t, b in active:
        part = ad.scale(t, b)
        total = part if total is None else ad.add(total, part)
    if weighting == "unweighted":
        total = ad.scale(total, 1.0 / len(active))
    if not np.isfinite(total.data):
        raise ValueError("non-finite joint loss")
    breakdown = LossBreakdown(
        l_seq=float(l_seq.data) if l_seq is not None else 0.0,
        l_exp=float(l_exp.data) if l_exp is not None else 0.0,
        l_rp=float(l_rp.data) if l_rp is not None else 0.0,
        l_total=float(total.data),
    )
    return total, breakdown


class Lumen(Module):
    """Composed multi-task model over a shared vocabulary."""

    def __init__(self, cfg: LumenConfig, vocab: Vocabulary, seed: int = 0):
        super().__init__()
        if cfg.entity_block.vocab_size < len(vocab) or \
           cfg.generator_block.vocab_size < len(vocab):
            raise ValueError("block vocab_size smaller than the vocabulary")
        self.cfg = cfg
        self.vocab = vocab
        streams = [np.random.default_rng(s)
                   for s in np.random.SeedSequence(seed).spawn(5)]
        rng_entity, rng_visual, rng_gen, rng_seq, rng_fuse = streams
        self.entity_encoder: TextPairEncoder | None = None
        self.seq_head: Linear | None = None
        if cfg.use_entity:
            self.entity_encoder = self.child(
                "entity_encoder", TextPairEncoder(rng_entity, cfg.entity_block))
            self.seq_head = self.child("seq_head",
                                       Linear(rng_seq, cfg.d_entity, cfg.n_classes))
        self.visual_encoder: PatchImageEncoder | None = None
        if cfg.use_visual:
            self.visual_encoder = self.child(
                "visual_encoder",
                PatchImageEncoder(rng_visual, cfg.visual_block, cfg.patch_size))
        self.generator = None
        if cfg.use_generator:
            gen_cls = (PromptedGenerator if cfg.decoder_family == "encoder_decoder"
                       else DecoderOnlyGenerator)
            self.generator = self.child("generator", gen_cls(rng_gen, cfg.generator_block))
        self.fusion = self.child("fusion", FusionHead(rng_fuse, cfg))

    # ------------------------------------------------------------------
    def prompt_for(self, sample: MemeSample):
        return build_prompt(sample.entity, sample.role, sample.ocr_text,
                            sample.caption, self.vocab,
                            include_caption=self.cfg.use_captions)

    def run_branches(self, sample: MemeSample) -> tuple[BranchOutputs, dict]:
        """Run the enabled branches; extras carry per-branch tensors."""
        branches = BranchOutputs()
        extras: dict = {}
        if self.cfg.use_entity:
            pair = build_pair_input(sample.ocr_text, sample.entity, self.vocab)
            _, t_h, _ = self.entity_encoder.encode(pair)
            branches.t_h = t_h
        if self.cfg.use_visual:
            image = sample.image
            if image is None:
                raise ValueError(
                    f"sample {sample.id}: visual branch enabled but image is missing")
            branches.v_h = self.visual_encoder.encode(image)
        if self.cfg.use_generator:
            prompt = self.prompt_for(sample)
            target = encode_explanation(sample.explanations[0], self.vocab)
            probs, e_h, l_exp = self.generator.teacher_forced(
                np.asarray(prompt.token_ids), target)
            branches.e_h = e_h
            extras["step_probs"] = probs
            extras["l_exp"] = l_exp
        return branches, extras

    def forward_sample(self, sample: MemeSample) -> ForwardResult:
        """Run enabled branches, fusion, and all enabled losses in one tape."""
        target = role_index(sample.role)
        branches, extras = self.run_branches(sample)
        l_seq_t = None
        if self.cfg.use_entity:
            l_seq_t = loss_seq(self.seq_head(branches.t_h), target)
        l_exp_t = extras.get("l_exp")
        cls_out = fuse_classify(branches, self.fusion, target)
        l_rp_t = loss_rp(cls_out, target)
        total, breakdown = joint_loss(l_seq_t, l_exp_t, l_rp_t, self.cfg.betas,
                                      self.cfg.loss_weighting)
        return ForwardResult(branches=branches, classification=cls_out,
                             loss_seq=l_seq_t, loss_exp=l_exp_t, loss_rp=l_rp_t,
                             loss_total=total, breakdown=breakdown,
                             step_probs=extras.get("step_probs"))

    def predict_role(self, sample: MemeSample) -> int:
        with ad.no_grad():
            branches, _ = self.run_branches(sample)
            logits = self.fusion(branches)
        return int(np.argmax(logits.data))

    def parameter_groups(self) -> dict[str, list[str]]:
        """Parameter names grouped by top-level component."""
        groups: dict[str, list[str]] = {}
        for name in self.parameters():
            groups.setdefault(name.split(".", 1)[0], []).append(name)
        return groups


def config_to_dict(cfg: LumenConfig) -> dict:
    from dataclasses import asdict

    d = asdict(cfg)
    d["betas"] = list(cfg.betas)
    return d


def config_from_dict(d: dict) -> LumenConfig:
    d = dict(d)
    for key in ("entity_block", "visual_block", "generator_block"):
        if isinstance(d.get(key), dict):
            d[key] = BlockConfig(**d[key])
    if "betas" in d:
        d["betas"] = tuple(d["betas"])
    return LumenConfig(**d)
