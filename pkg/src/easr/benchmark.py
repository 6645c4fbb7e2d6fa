"""Synthetic cross-subject transfer benchmark.

Two regimes on the default generator: the full one (50 trials per class per
session) compares none / EA / EA+S&R in the shared paradigm plus EA+S&R with
fine-tuning, and the low-data one (10 trials per class per session) compares
EA with EA+S&R. Accuracies are reported in percentage points.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

from .experiments import ExperimentPlan, ResultTable, run_plans
from .model import TrainConfig
from .synthgen import GeneratorConfig, generate

BENCHMARK_SEEDS = (0, 1, 2, 3, 4)


@dataclass
class BenchmarkConfig:
    seeds: tuple[int, ...] = BENCHMARK_SEEDS
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    train_config: TrainConfig = field(default_factory=TrainConfig)
    low_data_trials_per_class: int = 10
    # 10 trials/class leaves ~100 source trials per fold; batch 64 underfits
    # inside the 200-epoch budget, so the low-data regime uses smaller batches
    low_data_batch_size: int = 20
    workers: int = 1


def full_plans(cfg: BenchmarkConfig) -> list[ExperimentPlan]:
    plans = [ExperimentPlan(paradigm="shared", transform=t, train_config=cfg.train_config,
                            seeds=cfg.seeds) for t in ("none", "ea", "ea_sr")]
    plans.append(ExperimentPlan(paradigm="shared_finetune", transform="ea_sr",
                                train_config=cfg.train_config, seeds=cfg.seeds))
    return plans


def low_data_plans(cfg: BenchmarkConfig) -> list[ExperimentPlan]:
    return [ExperimentPlan(paradigm="shared", transform=t, train_config=cfg.train_config,
                           seeds=cfg.seeds, batch_size=cfg.low_data_batch_size)
            for t in ("ea", "ea_sr")]


def _means(table: ResultTable) -> dict:
    out = {}
    for paradigm, transform in sorted({(r.paradigm, r.transform) for r in table.rows}):
        key = transform if paradigm == "shared" else f"{transform}_finetune"
        out[key] = round(100.0 * table.mean_accuracy(paradigm=paradigm, transform=transform), 4)
    return out


def run_benchmark(seeds=BENCHMARK_SEEDS, cfg: BenchmarkConfig | None = None) -> dict:
    cfg = replace(cfg or BenchmarkConfig(), seeds=tuple(seeds))
    t0 = time.perf_counter()
    full_ts, _ = generate(cfg.generator)
    full = run_plans(full_plans(cfg), full_ts, cfg.workers)
    low_gen = replace(cfg.generator, trials_per_class_per_session=cfg.low_data_trials_per_class)
    low_ts, _ = generate(low_gen)
    low = run_plans(low_data_plans(cfg), low_ts, cfg.workers)
    return {"means": {"full": _means(full), "low": _means(low)},
            "tables": {"full": full, "low": low},
            "seconds": time.perf_counter() - t0}
