"""Command-line interface.

Subcommands: ingest, synth, train, generate, eval, ablate, gradcheck.
Exit code 0 on success; on failure a single machine-parsable line
"error: <message>" goes to stderr and the exit code is 1. The LUMEN_OUT
environment variable sets the default output root (fallback ./runs).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import gradcheck as gc
from .data import Vocabulary, build_pair_input, encode_explanation, load_dataset, \
    validate_counts
from .decoding import DecodeConfig, decode
from .harness import DEFAULT_OUT_ENV, ExperimentConfig, apply_overrides, \
    embedding_provider_from_arg, emit_tables, parse_override, read_predictions, \
    predictions_to_pairs, run_ablations, run_experiment, single_run_table, \
    write_predictions
from .metrics import evaluate_corpus
from .synth import SyntheticSpec, generate_synthetic_corpus, write_corpus
from .training import load_model


def _out_root(value: str | None) -> Path:
    return Path(value or os.environ.get(DEFAULT_OUT_ENV) or "runs")


def _load_experiment(args) -> ExperimentConfig:
    if args.config:
        cfg = ExperimentConfig.from_dict(
            json.loads(Path(args.config).read_text(encoding="utf-8")))
    else:
        cfg = ExperimentConfig()
    overrides = dict(parse_override(s) for s in (args.set or []))
    if args.seed is not None:
        overrides["seed"] = args.seed
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    return cfg


def cmd_ingest(args) -> int:
    samples = load_dataset(args.data)
    table = validate_counts(samples, expect_exhvv=args.expect_exhvv)
    print(f"loaded {table.total()} samples from {args.data}")
    for role in ("villain", "victim", "hero"):
        print(f"  {role}: {table.role_total(role)}")
    for split in ("train", "val", "test"):
        print(f"  {split}: {table.split_total(split)}")
    if args.expect_exhvv:
        print("count table matches the published totals")
    if args.out:
        vocab = Vocabulary.build(samples)
        cache = {
            "vocab": vocab.id_to_token,
            "records": [
                {
                    "id": s.id,
                    "pair_ids": list(build_pair_input(s.ocr_text, s.entity, vocab).token_ids),
                    "target_ids": encode_explanation(s.explanations[0], vocab),
                    "role": s.role,
                    "split": s.split,
                }
                for s in samples
            ],
        }
        Path(args.out).write_text(json.dumps(cache, sort_keys=True) + "\n",
                                  encoding="utf-8")
        print(f"wrote token cache to {args.out}")
    return 0


def cmd_synth(args) -> int:
    per_role = tuple(int(x) for x in args.per_role.split(","))
    if len(per_role) != 3:
        raise ValueError("--per-role takes three comma-separated counts (hero,villain,victim)")
    spec = SyntheticSpec(seed=args.seed, per_role=per_role,
                         image_size=args.image_size, patch_size=args.patch_size,
                         n_references=args.references,
                         val_fraction=args.val_frac, test_fraction=args.test_frac)
    samples = generate_synthetic_corpus(spec)
    write_corpus(samples, args.out)
    print(f"wrote {len(samples)} samples to {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_experiment(args)
    result = run_experiment(cfg, _out_root(args.out))
    last = result.log.epochs[-1] if result.log.epochs else None
    print(f"run directory: {result.run_dir}")
    if last:
        print(f"final epoch {last.epoch}: L_total={last.l_total:.4f} "
              f"role_accuracy={last.role_accuracy:.3f}")
    return 0


def cmd_generate(args) -> int:
    model = load_model(args.ckpt)
    samples = [s for s in load_dataset(args.data) if s.split == args.split]
    if not samples:
        raise ValueError(f"no samples in split '{args.split}'")
    dcfg = DecodeConfig(strategy=args.strategy, beam_width=args.k,
                        max_len=args.max_len, alpha=args.alpha)
    records = []
    for s in samples:
        prompt = model.prompt_for(s)
        ids = decode(prompt, model.generator, dcfg)
        rec = s.to_record()
        rec["generated"] = model.vocab.decode(ids)
        records.append(rec)
    write_predictions(Path(args.out), records)
    print(f"wrote {len(records)} predictions to {args.out}")
    return 0


def cmd_eval(args) -> int:
    records = read_predictions(args.pred)
    suites = ("gen", "sim", "err") if args.suite == "all" else (args.suite,)
    emb = embedding_provider_from_arg(args.emb)
    report = evaluate_corpus(predictions_to_pairs(records), emb=emb, suites=suites)
    name = Path(args.pred).stem
    cfg = ExperimentConfig(name=name, suites=suites)
    table = single_run_table(cfg, report)
    out_dir = Path(args.out) if args.out else Path(args.pred).parent
    text_path, kv_path = emit_tables(table, out_dir, basename=f"{name}_report")
    print(table.render_text(), end="")
    print(f"wrote {text_path} and {kv_path}")
    return 0


def cmd_ablate(args) -> int:
    base = _load_experiment(args)
    out_root = _out_root(args.out)
    table, results = run_ablations(base, out_root)
    text_path, kv_path = emit_tables(table, out_root, basename="ablations")
    print(table.render_text(), end="")
    print(f"wrote {text_path} and {kv_path}")
    return 0


def cmd_gradcheck(args) -> int:
    seeds = list(range(args.seeds))
    results = gc.run_all(seeds)
    failures = 0
    for r in results:
        status = "ok" if r.passed else "FAIL"
        print(f"{status}  {r.name:<32} max_rel_err={r.max_rel_err:.3e} "
              f"coords={r.n_coords}")
        failures += 0 if r.passed else 1
    if failures:
        raise ValueError(f"{failures} gradient check(s) above tolerance")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lumen",
                                     description="multi-task meme explanation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load and validate a dataset file")
    p.add_argument("--data", required=True)
    p.add_argument("--expect-exhvv", action="store_true",
                   help="assert the published count table cell-for-cell")
    p.add_argument("--out", help="write a token cache JSON here")
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("synth", help="generate a deterministic synthetic corpus")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--per-role", required=True, metavar="H,VIL,VIC")
    p.add_argument("--out", required=True)
    p.add_argument("--image-size", type=int, default=32)
    p.add_argument("--patch-size", type=int, default=8)
    p.add_argument("--references", type=int, default=1)
    p.add_argument("--val-frac", type=float, default=0.0)
    p.add_argument("--test-frac", type=float, default=0.0)
    p.set_defaults(fn=cmd_synth)

    for name, fn, help_text in (
            ("train", cmd_train, "train a model and evaluate it"),
            ("ablate", cmd_ablate, "run the nine-configuration ablation sweep")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="experiment config JSON file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output root (default $LUMEN_OUT or ./runs)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="config override; repeatable, wins over the file")
        p.set_defaults(fn=fn)

    p = sub.add_parser("generate", help="decode explanations from a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--strategy", default="greedy", choices=("greedy", "beam"))
    p.add_argument("--k", type=int, default=1, help="beam width")
    p.add_argument("--max-len", type=int, default=32)
    p.add_argument("--alpha", type=float, default=0.7)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("eval", help="score a predictions file")
    p.add_argument("--pred", required=True)
    p.add_argument("--suite", default="all", choices=("gen", "sim", "err", "all"))
    p.add_argument("--emb", default="hash", help="hash or model:<ckpt>")
    p.add_argument("--out", help="report directory (default: beside predictions)")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference gradient checks")
    p.add_argument("--seeds", type=int, default=5, help="number of seeded configs")
    p.set_defaults(fn=cmd_gradcheck)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except Exception as exc:  # one-line machine-parsable failure
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
