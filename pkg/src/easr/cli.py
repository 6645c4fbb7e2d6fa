"""Command-line entry point: ``easr <command> ...``.

Failures print ``error: <Category>: <message>`` on stderr and exit 1; bad
usage exits 2. Every command that draws random numbers takes ``--seed``.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .alignment import align_dataset
from .augmentation import SRAugmenter, augment_batch
from .config import load_plan_file
from .core import TrialSet
from .errors import ConfigError, EASRError
from .experiments import TRANSFORMS, ResultTable, run_plans, stream
from .io import (atomic_write_text, load_checkpoint, read_container, save_checkpoint,
                 save_references, write_container)
from .model import TrainConfig, build_model, evaluate, model_from_config, train
from .preprocessing import PreprocessConfig, preprocess
from .report import render
from .stats import PairedSample, paired_permutation_test, stouffer_combine
from .synthgen import GeneratorConfig, export, generate


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def _add_dataclass_flags(parser, cls, skip=()):
    for f in fields(cls):
        if f.name in skip:
            continue
        default = f.default
        if isinstance(default, bool):
            parser.add_argument(_flag(f.name), type=lambda s: s.lower() in ("1", "true", "yes"),
                                default=default, metavar="BOOL")
        elif isinstance(default, tuple):
            parser.add_argument(_flag(f.name), type=float, nargs="+", default=list(default))
        else:
            parser.add_argument(_flag(f.name), type=type(default), default=default)


def _dataclass_from(args, cls, skip=()):
    return cls(**{f.name: getattr(args, f.name) for f in fields(cls) if f.name not in skip})


def _subset(ts: TrialSet, subjects, sessions) -> TrialSet:
    mask = np.ones(len(ts), dtype=bool)
    if subjects:
        mask &= np.isin(ts.subject, subjects)
    if sessions:
        mask &= np.isin(ts.run, sessions)
    return ts.take(np.flatnonzero(mask))


def _print_json(obj):
    print(json.dumps(obj, indent=2, sort_keys=True))


# --- commands ---------------------------------------------------------------

def cmd_synth(args):
    cfg = _dataclass_from(args, GeneratorConfig)
    ts, truth = generate(cfg)
    manifest = export(ts, truth, args.out)
    print(f"wrote {manifest['n_trials']} trials ({manifest['n_subjects']} subjects) "
          f"to {args.out}  hash {manifest['content_hash'][:16]}")


def cmd_preprocess(args):
    ts = read_container(args.data)
    out = preprocess(ts, _dataclass_from(args, PreprocessConfig))
    manifest = write_container(out, args.out)
    print(f"wrote {manifest['n_trials']} trials to {args.out} "
          f"(steps: {', '.join(out.preprocessing)})")


def cmd_align(args):
    ts = read_container(args.data)
    out, refs = align_dataset(ts)
    write_container(out, args.out)
    save_references(Path(args.out) / "references.npz", refs)
    print(f"aligned {len(refs)} runs; wrote {args.out}")


def cmd_augment(args):
    ts = _subset(read_container(args.data), args.subjects, args.sessions)
    rng = stream(args.seed, 41)
    parts = []
    for subject, session in ts.groups():
        block = ts.take(np.flatnonzero((ts.subject == subject) & (ts.run == session)))
        X, y = augment_batch(block.X, block.y, args.segment_count, rng, args.boundary_mode,
                             multiplier=args.multiplier)
        parts.append((X, y, subject, session))
    X = np.concatenate([p[0] for p in parts])
    y = np.concatenate([p[1] for p in parts])
    subj = np.concatenate([np.full(len(p[1]), p[2]) for p in parts])
    run = np.concatenate([np.full(len(p[1]), p[3]) for p in parts])
    out = TrialSet(X, y, subj, run, ts.class_count, ts.sampling_rate, ts.preprocessing,
                   ts.aligned, {**ts.meta, "augmented": {"seed": args.seed,
                                                         "segment_count": args.segment_count,
                                                         "boundary_mode": args.boundary_mode,
                                                         "multiplier": args.multiplier}})
    manifest = write_container(out, args.out)
    print(f"wrote {manifest['n_trials']} trials (originals + synthetic) to {args.out}")


def cmd_train(args):
    ts = _subset(read_container(args.data), args.subjects, args.sessions)
    if args.align:
        ts, _ = align_dataset(ts)
    valid = None
    if args.valid_fraction > 0:
        rng = stream(args.seed, 31)
        idx = rng.permutation(len(ts))
        n_valid = int(round(args.valid_fraction * len(ts)))
        valid = ts.take(np.sort(idx[:n_valid]))
        ts = ts.take(np.sort(idx[n_valid:]))
    cfg = TrainConfig(max_epochs=args.max_epochs, patience=min(args.patience, args.max_epochs),
                      learning_rate=args.learning_rate, weight_decay=args.weight_decay,
                      batch_size=args.batch_size, seed=args.seed)
    augmenter = None
    if args.sr:
        augmenter = SRAugmenter(segment_count=args.segment_count)
    model = build_model(args.model, ts.n_channels, ts.n_times, ts.class_count)
    params, hist = train(model, ts, valid, cfg, augmenter)
    meta = {"model": model.config(), "train_config": cfg.to_dict(), "history": hist.to_dict(),
            "aligned": bool(args.align), "sr": bool(args.sr), "library_version": __version__}
    save_checkpoint(args.out, params, meta)
    print(f"trained {args.model} for {len(hist.train_loss)} epochs (best {hist.best_epoch}); "
          f"wrote {args.out}")


def cmd_evaluate(args):
    params, meta = load_checkpoint(args.checkpoint)
    model = model_from_config(meta["model"])
    ts = _subset(read_container(args.data), args.subjects, args.sessions)
    if meta.get("aligned") and not ts.aligned:
        ts, _ = align_dataset(ts)
    acc, cm = evaluate(model, params, ts)
    _print_json({"accuracy": acc, "confusion_matrix": cm.tolist(), "n_trials": len(ts)})


def cmd_run(args):
    plans, opts = load_plan_file(args.plan)
    dataset = args.dataset or opts["dataset"]
    if not dataset:
        raise ConfigError("plan names no dataset; pass --dataset")
    if args.seeds:
        plans = [replace(p, seeds=tuple(args.seeds)) for p in plans]
    ts = read_container(dataset)
    table = run_plans(plans, ts, workers=args.workers or opts["workers"])
    out = Path(args.out)
    atomic_write_text(out / "results.csv", table.to_csv())
    atomic_write_text(out / "run_metadata.json",
                      json.dumps(table.metadata, indent=2, sort_keys=True, default=str) + "\n")
    status = table.metadata["row_status"]
    print(f"{status['ok']} rows ok, {status['failed']} failed; wrote {out / 'results.csv'}")


def _paired(table: ResultTable, a: str, b: str, paradigm: str, model: str | None):
    def collect(transform):
        return {(r.model, r.unit, r.seed): r.accuracy for r in table.rows
                if r.ok and r.transform == transform and r.paradigm == paradigm
                and (model is None or r.model == model)}
    return PairedSample.from_mappings(collect(a), collect(b))


def cmd_stats(args):
    tables = [(p, ResultTable.from_csv(Path(p).read_text())) for p in args.results]
    a, b = (args.a, args.b) if args.tail == "greater" else (args.b, args.a)
    paradigms = args.paradigm or sorted({r.paradigm for _, t in tables for r in t.rows})
    for paradigm in paradigms:
        p_values = []
        for name, table in tables:
            sample = _paired(table, a, b, paradigm, args.model)
            p = paired_permutation_test(sample, args.n_permutations,
                                        stream(args.seed, 53, len(p_values)))
            p_values.append(p)
            diff = 100.0 * float(np.mean(sample.condition_a - sample.condition_b))
            print(f"{paradigm}\t{name}\tn={len(sample.condition_a)}\t"
                  f"mean({a}-{b})={diff:+.2f}\tp={p:.6g}")
        print(f"{paradigm}\tcombined\tdatasets={len(p_values)}\tp={stouffer_combine(p_values):.6g}")


def cmd_report(args):
    table = ResultTable.from_csv(Path(args.results).read_text())
    sys.stdout.write(render(table, delta=args.delta, fmt=args.format, baseline=args.baseline))


# --- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="easr", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic multi-subject dataset")
    _add_dataclass_flags(p, GeneratorConfig)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("preprocess", help="rescale, band-pass and standardize a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    _add_dataclass_flags(p, PreprocessConfig)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("align", help="whiten every run by its own reference matrix")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_align)

    def selection(p):
        p.add_argument("--subjects", type=int, nargs="+")
        p.add_argument("--sessions", type=int, nargs="+")

    p = sub.add_parser("augment", help="offline preview of segment recombination")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--segment-count", type=int, default=12)
    p.add_argument("--boundary-mode", choices=("equal_width", "random_cuts"),
                   default="equal_width")
    p.add_argument("--multiplier", type=int, default=1)
    selection(p)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("train", help="train one decoder and save a checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--model", choices=("shallow", "linear"), default="shallow")
    p.add_argument("--align", action="store_true")
    p.add_argument("--sr", action="store_true", help="online segment recombination")
    p.add_argument("--segment-count", type=int, default=12)
    p.add_argument("--valid-fraction", type=float, default=0.15)
    defaults = TrainConfig()
    p.add_argument("--max-epochs", type=int, default=defaults.max_epochs)
    p.add_argument("--patience", type=int, default=defaults.patience)
    p.add_argument("--learning-rate", type=float, default=defaults.learning_rate)
    p.add_argument("--weight-decay", type=float, default=defaults.weight_decay)
    p.add_argument("--batch-size", type=int, default=defaults.batch_size)
    selection(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    selection(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("run", help="execute an experiment plan")
    p.add_argument("--plan", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dataset", help="override the plan's dataset path")
    p.add_argument("--seeds", type=int, nargs="+", help="override the plan's seeds")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("stats", help="paired permutation tests plus Stouffer combination")
    p.add_argument("results", nargs="+", help="one results.csv per dataset")
    p.add_argument("--a", required=True, choices=TRANSFORMS)
    p.add_argument("--b", required=True, choices=TRANSFORMS)
    p.add_argument("--tail", choices=("greater", "less"), default="greater")
    p.add_argument("--paradigm", nargs="+")
    p.add_argument("--model")
    p.add_argument("--n-permutations", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("report", help="render a results table")
    p.add_argument("results")
    p.add_argument("--delta", action="store_true", help="paired change vs the baseline")
    p.add_argument("--baseline", default="none", choices=TRANSFORMS)
    p.add_argument("--format", choices=("markdown", "text"), default="markdown")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        args.func(args)
    except EASRError as exc:
        print(f"error: {exc.category}: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
