"""Training paradigms x transform conditions, splits, result tables and summaries.

Paradigms
    individual       one model per subject, trained and tested on that subject.
    shared           k-fold over subjects: train on the other folds, test each
                     held-out subject on its test portion.
    shared_finetune  the shared model, then fine-tuned per held-out subject on
                     that subject's fine-tuning portion.

Transforms
    none, ea (offline alignment), sr (online S&R), ea_sr (both; EA first).

Every random choice draws from a Philox stream keyed by (plan seed, purpose,
unit), so rows do not depend on execution order.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import __version__
from .alignment import align_dataset, apply_alignment, compute_target_reference
from .augmentation import BOUNDARY_MODES, SRAugmenter
from .core import TrialSet, concat
from .errors import (ConfigError, EASRError, EmptySplit, InsufficientSubjects, PairingError,
                     StratificationFailure)
from .model import TrainConfig, build_model, evaluate, fine_tune, train
from .preprocessing import PreprocessConfig, preprocess

PARADIGMS = ("individual", "shared", "shared_finetune")
TRANSFORMS = ("none", "ea", "sr", "ea_sr")
SPLIT_MODES = ("by_session", "by_fraction")
CSV_HEADER = ("paradigm", "transform", "model", "unit", "seed", "accuracy", "status")


@dataclass
class SplitSpec:
    """How trials are divided.

    ``mode`` governs within-subject splits (individual training and the
    fine-tuning portion of target subjects): ``by_session`` maps sessions to
    train / (valid) / test, ``by_fraction`` uses ``fractions`` for individual
    training and a first-half / second-half split for fine-tuning. Shared
    training always uses ``fold_count`` folds over subjects.
    """

    mode: str = "by_session"
    fractions: tuple[float, float, float] = (0.70, 0.15, 0.15)
    fold_count: int = 5
    shared_valid_fraction: float = 0.15
    finetune_valid_fraction: float = 0.0

    def __post_init__(self):
        self.fractions = tuple(float(f) for f in self.fractions)
        if self.mode not in SPLIT_MODES:
            raise ConfigError(f"split mode must be one of {SPLIT_MODES}")
        if len(self.fractions) != 3 or abs(sum(self.fractions) - 1.0) > 1e-9:
            raise ConfigError("fractions must be three numbers summing to 1")
        if min(self.fractions) < 0:
            raise ConfigError("fractions must be non-negative")
        if self.fold_count < 2:
            raise ConfigError("fold_count must be at least 2")
        for name in ("shared_valid_fraction", "finetune_valid_fraction"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ConfigError(f"{name} must lie in [0, 1)")


@dataclass
class ExperimentPlan:
    paradigm: str
    transform: str
    dataset_ref: str | None = None
    split_spec: SplitSpec = field(default_factory=SplitSpec)
    train_config: TrainConfig = field(default_factory=TrainConfig)
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    calibration_fraction: float = 1.0
    model: str = "shallow"
    segment_count: int = 12
    boundary_mode: str = "equal_width"
    multiplier: int = 1
    batch_size: int | None = None
    preprocess: bool = False
    preprocess_config: PreprocessConfig = field(default_factory=PreprocessConfig)

    def __post_init__(self):
        if self.paradigm not in PARADIGMS:
            raise ConfigError(f"paradigm must be one of {PARADIGMS}, got {self.paradigm!r}")
        if self.transform not in TRANSFORMS:
            raise ConfigError(f"transform must be one of {TRANSFORMS}, got {self.transform!r}")
        if not 0.0 < self.calibration_fraction <= 1.0:
            raise ConfigError("calibration_fraction must lie in (0, 1]")
        if self.boundary_mode not in BOUNDARY_MODES:
            raise ConfigError(f"boundary_mode must be one of {BOUNDARY_MODES}")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        self.seeds = tuple(int(s) for s in self.seeds)

    @property
    def uses_ea(self) -> bool:
        return self.transform in ("ea", "ea_sr")

    @property
    def uses_sr(self) -> bool:
        return self.transform in ("sr", "ea_sr")

    def effective_train_config(self, seed: int) -> TrainConfig:
        cfg = replace(self.train_config, seed=seed)
        if self.batch_size is not None:
            cfg = replace(cfg, batch_size=self.batch_size)
        return cfg

    def augmenter(self):
        if not self.uses_sr:
            return None
        return SRAugmenter(self.segment_count, self.boundary_mode, self.multiplier)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["seeds"] = list(self.seeds)
        d["split_spec"]["fractions"] = list(self.split_spec.fractions)
        return d

    def config_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


@dataclass
class ResultRow:
    paradigm: str
    transform: str
    model: str
    unit: str
    seed: int
    accuracy: float
    status: str = "ok"

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def sort_key(self):
        return (PARADIGMS.index(self.paradigm) if self.paradigm in PARADIGMS else 99,
                TRANSFORMS.index(self.transform) if self.transform in TRANSFORMS else 99,
                self.model, self.unit, self.seed)


@dataclass
class ResultTable:
    rows: list[ResultRow] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.rows)

    def extend(self, other: "ResultTable"):
        self.rows.extend(other.rows)
        return self

    def sorted(self) -> "ResultTable":
        return ResultTable(sorted(self.rows, key=ResultRow.sort_key), dict(self.metadata))

    def select(self, **criteria) -> list[ResultRow]:
        return [r for r in self.rows if all(getattr(r, k) == v for k, v in criteria.items())]

    def mean_accuracy(self, **criteria) -> float:
        vals = [r.accuracy for r in self.select(**criteria) if r.ok]
        return float(np.mean(vals)) if vals else float("nan")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.sorted().rows:
            acc = "" if not r.ok or math.isnan(r.accuracy) else f"{r.accuracy:.6f}"
            w.writerow([r.paradigm, r.transform, r.model, r.unit, r.seed, acc, r.status])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ResultTable":
        reader = csv.DictReader(io.StringIO(text))
        if tuple(reader.fieldnames or ()) != CSV_HEADER:
            raise ConfigError(f"results CSV header must be {','.join(CSV_HEADER)}")
        rows = []
        for rec in reader:
            acc = float(rec["accuracy"]) if rec["accuracy"] else float("nan")
            rows.append(ResultRow(rec["paradigm"], rec["transform"], rec["model"], rec["unit"],
                                  int(rec["seed"]), acc, rec["status"]))
        return cls(rows)


def stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=key)))


# --- splits -----------------------------------------------------------------

def _stratified_parts(y: np.ndarray, fractions, rng) -> list[np.ndarray]:
    """Per class: shuffle, then cut by cumulative rounded fractions."""
    parts = [[] for _ in fractions]
    edges = np.cumsum(fractions)
    for c in np.unique(y):
        idx = np.flatnonzero(y == c)
        idx = idx[rng.permutation(idx.size)]
        cuts = [0] + [int(round(e * idx.size)) for e in edges[:-1]] + [idx.size]
        for k in range(len(fractions)):
            parts[k].extend(idx[cuts[k]:cuts[k + 1]].tolist())
    return [np.array(sorted(p), dtype=np.int64) for p in parts]


def split_individual(ts: TrialSet, spec: SplitSpec, rng: np.random.Generator):
    """(train, valid, test) for a single subject; ``valid`` may be empty."""
    if len(ts.subjects()) != 1:
        raise ConfigError("split_individual expects exactly one subject")
    if spec.mode == "by_session":
        return _session_split(ts)
    train_idx, valid_idx, test_idx = _stratified_parts(ts.y, spec.fractions, rng)
    present = set(np.unique(ts.y).tolist())
    for name, idx, frac in (("train", train_idx, spec.fractions[0]),
                            ("valid", valid_idx, spec.fractions[1]),
                            ("test", test_idx, spec.fractions[2])):
        if frac > 0 and set(np.unique(ts.y[idx]).tolist()) != present:
            raise StratificationFailure(f"a class is missing from the {name} split")
    return ts.take(train_idx), ts.take(valid_idx), ts.take(test_idx)


def _session_split(ts: TrialSet):
    runs = ts.runs()
    pick = lambda r: ts.take(np.flatnonzero(ts.run == r))
    empty = ts.take(np.array([], dtype=np.int64))
    if len(runs) == 1:
        raise EmptySplit("by_session needs at least two sessions")
    if len(runs) == 2:
        return pick(runs[0]), empty, pick(runs[1])
    rest = np.flatnonzero(np.isin(ts.run, runs[2:]))
    return pick(runs[0]), pick(runs[1]), ts.take(rest)


def split_shared(ts: TrialSet, fold_count: int = 5, rng: np.random.Generator | None = None):
    """Balanced partition of subjects into folds; returns [(train_subjects, test_subjects)]."""
    subjects = ts.subjects()
    if len(subjects) < fold_count:
        raise InsufficientSubjects(f"{len(subjects)} subjects cannot fill {fold_count} folds")
    order = list(subjects) if rng is None else [subjects[i] for i in rng.permutation(len(subjects))]
    groups = [sorted(order[k::fold_count]) for k in range(fold_count)]
    return [(sorted(set(subjects) - set(g)), g) for g in groups]


def split_finetune(ts: TrialSet, spec: SplitSpec, rng: np.random.Generator | None = None):
    """(finetune_train, finetune_valid, test) for one target subject.

    ``by_session``: first session fine-tunes, a three-session subject uses the
    second for validation and the rest for testing. ``by_fraction``: first
    half of the trials (in stored order) fine-tunes, second half tests.
    An optional ``finetune_valid_fraction`` carves validation out of the
    fine-tuning portion, stratified by class.
    """
    if spec.mode == "by_session":
        ft, valid, test = _session_split(ts)
    else:
        half = len(ts) // 2
        ft, valid, test = (ts.take(np.arange(half)), ts.take(np.array([], dtype=np.int64)),
                           ts.take(np.arange(half, len(ts))))
    if len(ft) == 0:
        raise EmptySplit("fine-tuning portion is empty")
    if len(valid) == 0 and spec.finetune_valid_fraction > 0:
        rng = rng if rng is not None else np.random.default_rng(0)
        f = spec.finetune_valid_fraction
        keep, carve = _stratified_parts(ft.y, (1.0 - f, f), rng)
        ft, valid = ft.take(keep), ft.take(carve)
    return ft, valid, test


# --- running ----------------------------------------------------------------

def trial_hashes(X: np.ndarray) -> list[str]:
    return [hashlib.sha256(np.ascontiguousarray(x).tobytes()).hexdigest()[:16] for x in X]


def dataset_hash(ts: TrialSet) -> str:
    h = hashlib.sha256()
    for arr in (ts.X, ts.y, ts.subject, ts.run):
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()


def _calibration_portion(ft: TrialSet, valid: TrialSet, fraction: float) -> np.ndarray:
    pool = concat([ft, valid]) if len(valid) else ft
    n = max(1, math.ceil(fraction * len(pool)))
    return pool.X[:n]


def _align_target(target: TrialSet, calib_X: np.ndarray, subject: int):
    ref = compute_target_reference(calib_X, subject_id=subject)
    return target.with_data(apply_alignment(ref, target.X), aligned=True), ref


def _individual_rows(plan: ExperimentPlan, ts: TrialSet, subject: int, seed: int, log: dict):
    data = ts.take(np.flatnonzero(ts.subject == subject))
    stages = ["split"]
    if plan.uses_ea:
        # each run whitened offline by its own reference (label-free)
        data, _ = align_dataset(data)
        stages.insert(0, "align")
    rng = stream(seed, 11, subject)
    tr, va, te = split_individual(data, plan.split_spec, rng)
    model = build_model(plan.model, ts.n_channels, ts.n_times, ts.class_count)
    cfg = plan.effective_train_config(seed)
    augmenter = plan.augmenter()
    stages += ["batch"] + (["augment"] if augmenter else []) + ["train", "evaluate"]
    params, hist = train(model, tr, va if len(va) else None, cfg, augmenter)
    acc, _ = evaluate(model, params, te)
    unit = f"subj{subject:03d}"
    log[unit] = {"stages": stages, "best_epoch": hist.best_epoch,
                 "sizes": [len(tr), len(va), len(te)],
                 "hashes": {"train": trial_hashes(tr.X), "valid": trial_hashes(va.X),
                            "test": trial_hashes(te.X)}}
    return [ResultRow("individual", plan.transform, plan.model, unit, seed, acc)]


def _shared_rows(plan: ExperimentPlan, ts: TrialSet, fold: int, train_subjects, test_subjects,
                 seed: int, want_shared: bool, want_finetune: bool, log: dict):
    stages = []
    source = ts.take(np.flatnonzero(np.isin(ts.subject, train_subjects)))
    if plan.uses_ea:
        source, _ = align_dataset(source)
        stages.append("align")
    targets = {}
    for s in test_subjects:
        tdata = ts.take(np.flatnonzero(ts.subject == s))
        ft, va, te = split_finetune(tdata, plan.split_spec, stream(seed, 23, s))
        if plan.uses_ea:
            calib = _calibration_portion(ft, va, plan.calibration_fraction)
            ref = compute_target_reference(calib, subject_id=s)
            ft, va, te = (x.with_data(apply_alignment(ref, x.X), aligned=True) if len(x) else x
                          for x in (ft, va, te))
            log.setdefault("calibration", {})[f"subj{s:03d}"] = trial_hashes(calib)
        targets[s] = (ft, va, te)
    stages.append("split")

    vf = plan.split_spec.shared_valid_fraction
    rng = stream(seed, 31, fold)
    if vf > 0:
        keep, carve = _stratified_parts(source.y, (1.0 - vf, vf), rng)
        train_set, valid_set = source.take(keep), source.take(carve)
    else:
        train_set, valid_set = source, None
    model = build_model(plan.model, ts.n_channels, ts.n_times, ts.class_count)
    cfg = plan.effective_train_config(seed)
    augmenter = plan.augmenter()
    stages += ["batch"] + (["augment"] if augmenter else []) + ["train", "evaluate"]
    params, hist = train(model, train_set, valid_set, cfg, augmenter)

    rows = []
    for s in test_subjects:
        ft, va, te = targets[s]
        unit = f"fold{fold}-subj{s:03d}"
        entry = {"stages": stages, "best_epoch": hist.best_epoch,
                 "hashes": {"train": trial_hashes(train_set.X),
                            "valid": trial_hashes(valid_set.X) if valid_set else [],
                            "test": trial_hashes(te.X),
                            "finetune": trial_hashes(ft.X) + trial_hashes(va.X)}}
        if want_shared:
            acc, _ = evaluate(model, params, te)
            rows.append(ResultRow("shared", plan.transform, plan.model, unit, seed, acc))
        if want_finetune:
            ft_params, ft_hist = fine_tune(model, params, ft, va if len(va) else None, cfg,
                                           augmenter)
            acc, _ = evaluate(model, ft_params, te)
            rows.append(ResultRow("shared_finetune", plan.transform, plan.model, unit, seed, acc))
            entry["finetune_best_epoch"] = ft_hist.best_epoch
        log[unit] = entry
    return rows


def _failed_rows(paradigms, plan, units, seed, exc):
    status = f"failed:{getattr(exc, 'category', type(exc).__name__)}"
    return [ResultRow(p, plan.transform, plan.model, u, seed, float("nan"), status)
            for p in paradigms for u in units]


def _task(args):
    kind, plan, ts, payload, seed = args
    log: dict = {}
    t0 = time.perf_counter()
    try:
        if kind == "individual":
            rows = _individual_rows(plan, ts, payload, seed, log)
        else:
            fold, train_subj, test_subj, want_shared, want_ft = payload
            rows = _shared_rows(plan, ts, fold, train_subj, test_subj, seed,
                                want_shared, want_ft, log)
    except EASRError as exc:
        if kind == "individual":
            rows = _failed_rows(["individual"], plan, [f"subj{payload:03d}"], seed, exc)
        else:
            fold, _, test_subj, want_shared, want_ft = payload
            paradigms = (["shared"] if want_shared else []) + (
                ["shared_finetune"] if want_ft else [])
            rows = _failed_rows(paradigms, plan, [f"fold{fold}-subj{s:03d}" for s in test_subj],
                                seed, exc)
        log["error"] = f"{exc.category}: {exc}"
    return rows, log, time.perf_counter() - t0


def prepare_dataset(plan: ExperimentPlan, ts: TrialSet) -> TrialSet:
    if plan.preprocess and not ts.preprocessing:
        ts = preprocess(ts, plan.preprocess_config)
    return ts


def _tasks_for(plans: list[ExperimentPlan], ts: TrialSet):
    """Group plans so that ``shared`` and ``shared_finetune`` share one trained model."""
    groups: dict = {}
    for plan in plans:
        key = json.dumps({**plan.to_dict(), "paradigm": None}, sort_keys=True)
        groups.setdefault(key, []).append(plan)
    tasks = []
    for group in groups.values():
        paradigms = {p.paradigm for p in group}
        base = group[0]
        for seed in base.seeds:
            if "individual" in paradigms:
                ind = next(p for p in group if p.paradigm == "individual")
                tasks += [("individual", ind, ts, s, seed) for s in ts.subjects()]
            if paradigms & {"shared", "shared_finetune"}:
                shared = next(p for p in group if p.paradigm != "individual")
                folds = split_shared(ts, shared.split_spec.fold_count, stream(seed, 7))
                for k, (tr, te) in enumerate(folds):
                    tasks.append(("shared", shared, ts, (k, tr, te, "shared" in paradigms,
                                                         "shared_finetune" in paradigms), seed))
    return tasks


def run_plans(plans: list[ExperimentPlan], ts: TrialSet, workers: int = 1) -> ResultTable:
    """Run several plans on one dataset; rows are assembled in a fixed sorted order."""
    if not plans:
        raise ConfigError("no plans to run")
    ts = prepare_dataset(plans[0], ts)
    tasks = _tasks_for(plans, ts)
    t0 = time.perf_counter()
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            outputs = list(pool.map(_task, tasks))
    else:
        outputs = [_task(t) for t in tasks]
    rows, logs, timings = [], [], []
    for (kind, plan, _, payload, seed), (r, log, dt) in zip(tasks, outputs):
        rows.extend(r)
        logs.append({"kind": kind, "transform": plan.transform, "model": plan.model,
                     "seed": seed, "detail": log})
        timings.append(dt)
    table = ResultTable(rows).sorted()
    table.metadata = {
        "library_version": __version__,
        "plans": [p.to_dict() for p in plans],
        "config_hashes": sorted({p.config_hash() for p in plans}),
        "seeds": sorted({s for p in plans for s in p.seeds}),
        "dataset_hash": dataset_hash(ts),
        "pairing_unit": "fold-subject (shared paradigms) or subject (individual)",
        "augmentation_source": "current batch",
        "early_stopping_monitor": "validation loss",
        "target_alignment": "calibration portion of target subjects only",
        "row_status": {"ok": sum(r.ok for r in rows), "failed": sum(not r.ok for r in rows)},
        "timing_s": {"total": time.perf_counter() - t0, "per_task": timings},
        "tasks": logs,
    }
    return table


def run_experiment(plan: ExperimentPlan, ts: TrialSet | None = None) -> ResultTable:
    if ts is None:
        if plan.dataset_ref is None:
            raise ConfigError("plan has no dataset_ref and no dataset was given")
        from .io import read_container
        ts = read_container(plan.dataset_ref)
    return run_plans([plan], ts)


# --- summaries --------------------------------------------------------------

@dataclass
class SummaryRow:
    paradigm: str
    model: str
    transform: str
    n: int
    mean: float
    std: float
    delta_mean: float
    delta_std: float


def _std(values) -> float:
    return float(np.std(values, ddof=1)) if len(values) > 1 else 0.0


def summarize(table: ResultTable, baseline_transform: str = "none") -> list[SummaryRow]:
    """Mean and std of accuracy, plus paired delta against the baseline, in percentage points.

    Units whose baseline or transform row failed are excluded from that pair.
    """
    out = []
    groups = sorted({(r.paradigm, r.model) for r in table.rows},
                    key=lambda g: (PARADIGMS.index(g[0]) if g[0] in PARADIGMS else 99, g[1]))
    for paradigm, model in groups:
        rows = table.select(paradigm=paradigm, model=model)
        base = {(r.unit, r.seed): r for r in rows if r.transform == baseline_transform}
        if not base:
            raise PairingError(f"no '{baseline_transform}' rows for {paradigm}/{model}")
        transforms = sorted({r.transform for r in rows},
                            key=lambda t: TRANSFORMS.index(t) if t in TRANSFORMS else 99)
        for t in transforms:
            cur = {(r.unit, r.seed): r for r in rows if r.transform == t}
            if set(cur) != set(base):
                raise PairingError(f"{paradigm}/{model}/{t}: units do not match the baseline")
            keys = [k for k in sorted(cur) if cur[k].ok and base[k].ok]
            acc = [100.0 * cur[k].accuracy for k in keys]
            delta = [100.0 * (cur[k].accuracy - base[k].accuracy) for k in keys]
            if not keys:
                out.append(SummaryRow(paradigm, model, t, 0, *(float("nan"),) * 4))
                continue
            out.append(SummaryRow(paradigm, model, t, len(keys), float(np.mean(acc)), _std(acc),
                                  float(np.mean(delta)), _std(delta)))
    return out
