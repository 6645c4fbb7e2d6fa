"""Experiment plan files (INI syntax, read with :mod:`configparser`).

Example::

    [plan]
    dataset = data/synth          ; relative to the plan file
    paradigms = shared, shared_finetune
    transforms = none, ea, sr, ea_sr
    models = shallow
    seeds = 0, 1, 2, 3, 4
    calibration_fraction = 1.0
    preprocess = false
    batch_size =                  ; optional per-dataset override
    workers = 1

    [split]
    mode = by_session
    fractions = 0.70, 0.15, 0.15
    fold_count = 5
    shared_valid_fraction = 0.15
    finetune_valid_fraction = 0.0

    [train]                       ; any TrainConfig field except seed
    max_epochs = 200

    [augment]
    segment_count = 12
    boundary_mode = equal_width
    multiplier = 1

    [preprocess]                  ; any PreprocessConfig field
    band_low_hz = 4

One plan is produced per (paradigm, transform, model) combination.
"""
from __future__ import annotations

import configparser
from dataclasses import fields
from itertools import product
from pathlib import Path

from .errors import ConfigError
from .experiments import ExperimentPlan, SplitSpec
from .model import TrainConfig
from .preprocessing import PreprocessConfig


def _list(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


def _typed(cls, section, exclude=()):
    out = {}
    known = {f.name: f for f in fields(cls)}
    for key in section:
        if key in exclude:
            continue
        if key not in known:
            raise ConfigError(f"unknown key '{key}' for {cls.__name__}")
        default = known[key].default
        raw = section[key]
        if isinstance(default, bool):
            out[key] = section.getboolean(key)
        elif isinstance(default, int):
            out[key] = int(raw)
        elif isinstance(default, float):
            out[key] = float(raw)
        elif isinstance(default, tuple):
            out[key] = tuple(float(v) for v in _list(raw))
        else:
            out[key] = raw
    return out


def parse_plan_text(text: str, base_dir: Path | str = ".") -> tuple[list[ExperimentPlan], dict]:
    """Parse plan text into plans plus run options (``workers``, dataset path)."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse plan: {exc}") from None
    if "plan" not in cp:
        raise ConfigError("plan file needs a [plan] section")
    sec = cp["plan"]
    allowed = {"dataset", "paradigms", "transforms", "models", "seeds",
               "calibration_fraction", "preprocess", "batch_size", "workers"}
    unknown = set(sec) - allowed
    if unknown:
        raise ConfigError(f"unknown [plan] keys: {sorted(unknown)}")
    dataset = sec.get("dataset")
    if dataset:
        dataset = str((Path(base_dir) / dataset).resolve())
    try:
        split = SplitSpec(**_typed(SplitSpec, cp["split"])) if "split" in cp else SplitSpec()
        train_cfg = TrainConfig(**_typed(TrainConfig, cp["train"], exclude=("seed",))) \
            if "train" in cp else TrainConfig()
        prep = PreprocessConfig(**_typed(PreprocessConfig, cp["preprocess"])) \
            if "preprocess" in cp else PreprocessConfig()
        aug = cp["augment"] if "augment" in cp else {}
        batch_size = sec.get("batch_size", "").strip()
        common = dict(
            dataset_ref=dataset,
            split_spec=split,
            train_config=train_cfg,
            seeds=tuple(int(s) for s in _list(sec.get("seeds", "0, 1, 2, 3, 4"))),
            calibration_fraction=sec.getfloat("calibration_fraction", 1.0),
            segment_count=int(aug.get("segment_count", 12)),
            boundary_mode=aug.get("boundary_mode", "equal_width"),
            multiplier=int(aug.get("multiplier", 1)),
            batch_size=int(batch_size) if batch_size else None,
            preprocess=sec.getboolean("preprocess", False),
            preprocess_config=prep,
        )
        plans = [ExperimentPlan(paradigm=p, transform=t, model=m, **common)
                 for p, t, m in product(_list(sec.get("paradigms", "shared")),
                                        _list(sec.get("transforms", "none")),
                                        _list(sec.get("models", "shallow")))]
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None
    return plans, {"workers": sec.getint("workers", 1), "dataset": dataset}


def load_plan_file(path) -> tuple[list[ExperimentPlan], dict]:
    path = Path(path)
    return parse_plan_text(path.read_text(), path.parent)
