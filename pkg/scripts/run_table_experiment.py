"""Reproduce the headline two-condition table across seeds.

Runs the default experiment (300 instructions, 17% ambiguous, calibrated
noise) once per seed, prints each table, and summarizes the naming deltas.
"""
import argparse
import pathlib

from namegrounder.evalharness import (
    ExperimentConfig,
    compare_reports,
    run_experiment,
)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=5,
                    help="number of seeds to run (default 5)")
    ap.add_argument("--out", type=pathlib.Path, default=None,
                    help="optional directory for per-seed reports.json")
    args = ap.parse_args()

    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)

    deltas = []
    for seed in range(args.seeds):
        result = run_experiment(ExperimentConfig(seed=seed))
        print(f"=== seed {seed}")
        print(result.table_text())
        print()
        d = compare_reports(result.without_report, result.with_report)
        deltas.append((seed, d["slices"]["ambiguous"]["sr"],
                       d["slices"]["all"]["sr"],
                       result.with_report.naming.percent))
        if args.out:
            path = args.out / f"reports_seed{seed}.json"
            path.write_text(result.reports_json())

    print("seed | SR delta (ambiguous) | SR delta (all) | naming SR")
    for seed, d_amb, d_all, naming in deltas:
        print(f"{seed:4d} | {d_amb:+20.1f} | {d_all:+14.1f} | {naming:9.1f}")


if __name__ == "__main__":
    main()
