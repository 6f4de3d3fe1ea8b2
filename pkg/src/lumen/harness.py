"""Experiment orchestration: configs, runs, ablation sweep, report tables.

Every run writes config, seed, checkpoints, predictions, training logs and
reports into one directory keyed by name and config hash, enough to
reproduce the row bit-for-bit. Report provenance includes a timestamp that
honors SOURCE_DATE_EPOCH so that seeded reruns are byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import time
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

from .data import MemeSample, Vocabulary, load_dataset, tokenize
from .decoding import DecodeConfig, decode
from .metrics import EvalPair, HashEmbeddingProvider, METRIC_COLUMNS, MetricReport, \
    ModelEmbeddingProvider, evaluate_corpus
from .model import BlockConfig, Lumen, LumenConfig
from .synth import SyntheticSpec, generate_synthetic_corpus
from .training import TrainingConfig, TrainingLog, load_model, train

DEFAULT_OUT_ENV = "LUMEN_OUT"

# Ablation row labels, in table order; LUMEN is the unmodified system and
# each other row names the component removed or swapped relative to it.
ABLATION_ROWS = (
    "+ self-attend",
    "LUMEN",
    "- adafactor",
    "- wtd loss",
    "- captions",
    "- T5 + GPT2",
    "- MTL",
    "- deBERTa-v2",
    "- ViT",
)

ABLATION_DELTAS: dict[str, dict] = {
    "+ self-attend": {"fusion_mode": "self_attend"},
    "LUMEN": {},
    "- adafactor": {"optimizer": "adam"},
    "- wtd loss": {"loss_weighting": "unweighted"},
    "- captions": {"use_captions": False},
    "- T5 + GPT2": {"decoder_family": "decoder_only"},
    "- MTL": {"betas": (0.0, 1.0, 0.0)},
    "- deBERTa-v2": {"use_entity": False},
    "- ViT": {"use_visual": False},
}


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: model switches, data source, training and decoding."""

    name: str = "experiment"
    seed: int = 0
    # model dimensions
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int = 128
    max_len: int = 128
    fusion_width: int = 64
    fusion_heads: int = 4
    image_size: int = 32
    patch_size: int = 8
    # model switches
    betas: tuple[float, float, float] = (0.2, 0.5, 0.3)
    use_visual: bool = True
    use_entity: bool = True
    use_generator: bool = True
    fusion_mode: str = "concat"
    optimizer: str = "adafactor"
    loss_weighting: str = "weighted"
    decoder_family: str = "encoder_decoder"
    use_captions: bool = True
    # data: a dataset path, or a synthetic corpus spec
    data_path: str | None = None
    synth_seed: int = 7
    per_role: tuple[int, int, int] = (4, 4, 4)
    val_fraction: float = 0.0
    test_fraction: float = 0.0
    # training
    epochs: int = 10
    batch_size: int = 8
    learning_rate: float | None = None
    # decoding + evaluation
    eval_split: str = "train"
    decode_strategy: str = "greedy"
    beam_width: int = 1
    decode_max_len: int = 32
    alpha: float = 0.7
    suites: tuple[str, ...] = ("gen", "sim", "err")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["betas"] = list(self.betas)
        d["per_role"] = list(self.per_role)
        d["suites"] = list(self.suites)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        for key, conv in (("betas", tuple), ("per_role", tuple), ("suites", tuple)):
            if key in d and isinstance(d[key], list):
                d[key] = conv(d[key])
        return cls(**d)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:12]

    def model_config(self, vocab_size: int) -> LumenConfig:
        block = BlockConfig(d_model=self.d_model, n_layers=self.n_layers,
                            n_heads=self.n_heads, d_ff=self.d_ff,
                            max_len=self.max_len, vocab_size=vocab_size)
        return LumenConfig(
            entity_block=block, visual_block=block, generator_block=block,
            fusion_width=self.fusion_width, fusion_heads=self.fusion_heads,
            betas=self.betas, use_visual=self.use_visual, use_entity=self.use_entity,
            use_generator=self.use_generator, fusion_mode=self.fusion_mode,
            optimizer=self.optimizer, loss_weighting=self.loss_weighting,
            decoder_family=self.decoder_family, use_captions=self.use_captions,
            image_size=self.image_size, patch_size=self.patch_size)

    def decode_config(self) -> DecodeConfig:
        return DecodeConfig(strategy=self.decode_strategy, beam_width=self.beam_width,
                            max_len=self.decode_max_len, alpha=self.alpha)

    def synthetic_spec(self) -> SyntheticSpec:
        return SyntheticSpec(seed=self.synth_seed, per_role=self.per_role,
                             image_size=self.image_size, patch_size=self.patch_size,
                             val_fraction=self.val_fraction,
                             test_fraction=self.test_fraction)


def apply_overrides(cfg: ExperimentConfig, overrides: dict) -> ExperimentConfig:
    """Flag overrides win over the config file."""
    d = cfg.to_dict()
    for key, value in overrides.items():
        if key not in d:
            raise ValueError(f"unknown config key '{key}'")
        d[key] = value
    return ExperimentConfig.from_dict(d)


def parse_override(text: str) -> tuple[str, object]:
    """Parse a KEY=VALUE override; the value is JSON when it parses, else a
    bare string."""
    key, sep, raw = text.partition("=")
    if not sep:
        raise ValueError(f"override '{text}' is not KEY=VALUE")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def provenance_timestamp() -> str:
    """UTC timestamp; SOURCE_DATE_EPOCH pins it for reproducible outputs."""
    raw = os.environ.get("SOURCE_DATE_EPOCH")
    moment = int(raw) if raw else int(time.time())
    return datetime.fromtimestamp(moment, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _slug(name: str) -> str:
    out = re.sub(r"[^a-z0-9]+", "-", name.lower()).strip("-")
    return out or "run"


@dataclass
class RunResult:
    config: ExperimentConfig
    run_dir: Path
    report: MetricReport
    log: TrainingLog
    predictions: list[dict]


def resolve_corpus(cfg: ExperimentConfig) -> list[MemeSample]:
    if cfg.data_path:
        return load_dataset(cfg.data_path)
    return generate_synthetic_corpus(cfg.synthetic_spec())


def predictions_to_pairs(records: list[dict]) -> list[EvalPair]:
    pairs = []
    for rec in records:
        refs = [tokenize(e) for e in rec["explanations"]]
        refs = [r for r in refs if r]
        if not refs:
            raise ValueError(f"record {rec.get('id')}: no non-empty references")
        pairs.append(EvalPair.of(tokenize(rec["generated"]), refs))
    return pairs


def generate_predictions(model: Lumen, samples: list[MemeSample],
                         dcfg: DecodeConfig) -> list[dict]:
    records = []
    for s in samples:
        prompt = model.prompt_for(s)
        ids = decode(prompt, model.generator, dcfg)
        text = model.vocab.decode(ids)
        rec = s.to_record()
        rec["generated"] = text
        records.append(rec)
    return records


def write_predictions(path: Path, records: list[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_predictions(path: str | Path) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            if "generated" not in rec or "explanations" not in rec:
                raise ValueError(f"{path}:{lineno}: not a predictions record")
            records.append(rec)
    return records


def run_experiment(cfg: ExperimentConfig, out_root: str | Path) -> RunResult:
    """Train, decode the evaluation split, and score it."""
    if not cfg.use_generator:
        raise ValueError(f"experiment '{cfg.name}': the generator branch is required "
                         "to produce explanations")
    out_root = Path(out_root)
    run_dir = out_root / f"{_slug(cfg.name)}__{cfg.config_hash()}"
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.json").write_text(
        json.dumps(cfg.to_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8")
    (run_dir / "seed").write_text(f"{cfg.seed}\n", encoding="utf-8")

    corpus = resolve_corpus(cfg)
    vocab = Vocabulary.build(corpus)
    model = Lumen(cfg.model_config(len(vocab)), vocab, seed=cfg.seed)
    tcfg = TrainingConfig(epochs=cfg.epochs, batch_size=cfg.batch_size,
                          learning_rate=cfg.learning_rate, seed=cfg.seed)
    log = train(model, corpus, tcfg, out_dir=run_dir)

    eval_samples = [s for s in corpus if s.split == cfg.eval_split]
    if not eval_samples:
        raise ValueError(f"experiment '{cfg.name}': no samples in split "
                         f"'{cfg.eval_split}'")
    records = generate_predictions(model, eval_samples, cfg.decode_config())
    write_predictions(run_dir / "predictions.jsonl", records)
    report = evaluate_corpus(predictions_to_pairs(records),
                             emb=HashEmbeddingProvider(), suites=cfg.suites)
    table = single_run_table(cfg, report)
    emit_tables(table, run_dir, basename="report")
    return RunResult(config=cfg, run_dir=run_dir, report=report, log=log,
                     predictions=records)


def ablation_configs(base: ExperimentConfig) -> dict[str, ExperimentConfig]:
    """The nine ablation configurations, keyed by row label."""
    configs = {}
    for row in ABLATION_ROWS:
        delta = dict(ABLATION_DELTAS[row])
        configs[row] = replace(base, name=row, **delta)
    return configs


def run_ablations(base: ExperimentConfig, out_root: str | Path
                  ) -> tuple["ReportTable", dict[str, RunResult]]:
    """Run the full system plus its eight ablations; any failure aborts
    with the partially filled table attached to the error."""
    out_root = Path(out_root)
    table = ReportTable.empty(rows=list(ABLATION_ROWS),
                              provenance={
                                  "seed": str(base.seed),
                                  "base_config_hash": base.config_hash(),
                                  "timestamp": provenance_timestamp(),
                              })
    results: dict[str, RunResult] = {}
    for row, cfg in ablation_configs(base).items():
        try:
            result = run_experiment(cfg, out_root)
        except Exception as exc:
            table.provenance["aborted_at"] = row
            raise RuntimeError(f"ablation row '{row}' failed: {exc}") from exc
        results[row] = result
        table.fill_row(row, result.report)
    return table, results


def baseline_family_configs(base: ExperimentConfig) -> dict[str, ExperimentConfig]:
    """Baseline families expressed purely as config flags: unimodal text,
    unimodal image, and multimodal without the multi-task objective."""
    return {
        "text-only": replace(base, name="text-only", use_visual=False),
        "image-only": replace(base, name="image-only", use_entity=False),
        "multimodal-non-mtl": replace(base, name="multimodal-non-mtl",
                                      betas=(0.0, 1.0, 0.0)),
    }


# ---------------------------------------------------------------------------
# report tables


@dataclass
class ReportTable:
    """Rows = experiment names, columns = metric display names."""

    rows: list[str]
    columns: list[str]
    cells: dict[tuple[str, str], float | int | None]
    provenance: dict[str, str] = field(default_factory=dict)

    @classmethod
    def empty(cls, rows: list[str], provenance: dict[str, str] | None = None
              ) -> "ReportTable":
        columns = [display for _, display in METRIC_COLUMNS]
        cells = {(r, c): None for r in rows for c in columns}
        return cls(rows=list(rows), columns=columns, cells=cells,
                   provenance=provenance or {})

    def fill_row(self, row: str, report: MetricReport) -> None:
        values = report.as_dict()
        for key, display in METRIC_COLUMNS:
            self.cells[(row, display)] = values.get(key)

    def render_text(self) -> str:
        lines = [f"# {k} = {v}" for k, v in sorted(self.provenance.items())]
        widths = {c: max(len(c), 8) for c in self.columns}
        name_w = max([len(r) for r in self.rows] + [len("model")])
        header = "model".ljust(name_w) + "  " + "  ".join(
            c.rjust(widths[c]) for c in self.columns)
        lines.append(header)
        for r in self.rows:
            cells = []
            for c in self.columns:
                v = self.cells.get((r, c))
                cells.append(("-" if v is None else f"{v:.4f}").rjust(widths[c]))
            lines.append(r.ljust(name_w) + "  " + "  ".join(cells))
        return "\n".join(lines) + "\n"

    def render_kv(self) -> str:
        """Machine format: provenance comments, then row<TAB>col<TAB>value."""
        lines = [f"# {k}={v}" for k, v in sorted(self.provenance.items())]
        for r in self.rows:
            for c in self.columns:
                v = self.cells.get((r, c))
                lines.append(f"{r}\t{c}\t{'NA' if v is None else repr(v)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def parse_kv(cls, text: str) -> "ReportTable":
        provenance: dict[str, str] = {}
        rows: list[str] = []
        columns: list[str] = []
        cells: dict[tuple[str, str], float | int | None] = {}
        for line in text.splitlines():
            if not line.strip():
                continue
            if line.startswith("# "):
                key, _, value = line[2:].partition("=")
                provenance[key] = value
                continue
            r, c, raw = line.split("\t")
            if r not in rows:
                rows.append(r)
            if c not in columns:
                columns.append(c)
            cells[(r, c)] = None if raw == "NA" else json.loads(raw)
        return cls(rows=rows, columns=columns, cells=cells, provenance=provenance)


def single_run_table(cfg: ExperimentConfig, report: MetricReport) -> ReportTable:
    table = ReportTable.empty(rows=[cfg.name], provenance={
        "seed": str(cfg.seed),
        "config_hash": cfg.config_hash(),
        "timestamp": provenance_timestamp(),
    })
    table.fill_row(cfg.name, report)
    return table


def emit_tables(table: ReportTable, out_dir: str | Path,
                basename: str = "table") -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    text_path = out_dir / f"{basename}.txt"
    kv_path = out_dir / f"{basename}.kv"
    text_path.write_text(table.render_text(), encoding="utf-8")
    kv_path.write_text(table.render_kv(), encoding="utf-8")
    return text_path, kv_path


def embedding_provider_from_arg(spec: str):
    """CLI embedding argument: 'hash' or 'model:<checkpoint path>'."""
    if spec == "hash":
        return HashEmbeddingProvider()
    if spec.startswith("model:"):
        return ModelEmbeddingProvider(load_model(spec.split(":", 1)[1]))
    raise ValueError(f"unknown embedding provider '{spec}' (use hash or model:<ckpt>)")
