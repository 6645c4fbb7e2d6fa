"""Synthetic transfer benchmark: shared-paradigm accuracies on the default generator.

    python scripts/benchmark.py --seeds 0 1 2 3 4 --out bench_out
"""
import argparse
import json
from pathlib import Path

from easr.benchmark import BENCHMARK_SEEDS, BenchmarkConfig, run_benchmark


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=list(BENCHMARK_SEEDS))
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", type=Path, help="directory for the per-row CSVs and summary")
    args = ap.parse_args()
    res = run_benchmark(args.seeds, BenchmarkConfig(workers=args.workers))
    summary = {"means": res["means"], "seconds": round(res["seconds"], 1),
               "ea_minus_none": round(res["means"]["full"]["ea"] - res["means"]["full"]["none"], 2),
               "ea_sr_minus_ea": round(res["means"]["full"]["ea_sr"] - res["means"]["full"]["ea"], 2),
               "low_ea_sr_minus_ea": round(res["means"]["low"]["ea_sr"] - res["means"]["low"]["ea"], 2),
               "finetune_minus_shared": round(res["means"]["full"]["ea_sr_finetune"]
                                              - res["means"]["full"]["ea_sr"], 2)}
    print(json.dumps(summary, indent=2))
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        for name, table in res["tables"].items():
            (args.out / f"results_{name}.csv").write_text(table.to_csv())
        (args.out / "summary.json").write_text(json.dumps(summary, indent=2))


if __name__ == "__main__":
    main()
