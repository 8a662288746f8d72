"""Trace the naming advantage as readout noise grows.

Sweeps p_flip at the default jitter/embedding noise and prints the SR of
both conditions on the ambiguous slice. The gap is the point of the whole
exercise: descriptor grounding degrades with p_flip while the name route
only depends on sigma/tau, so the delta widens.
"""
import argparse

from namegrounder.evalharness import ExperimentConfig, run_experiment
from namegrounder.grounder import NoiseConfig


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--scenes", type=int, default=20)
    ap.add_argument("--per-scene", type=int, default=15)
    ap.add_argument("--levels", type=float, nargs="+",
                    default=[0.0, 0.06, 0.12, 0.25, 0.5])
    args = ap.parse_args()

    print("p_flip | ambiguous SR w/o | ambiguous SR w/ | all SR w/o | all SR w/")
    for p in args.levels:
        cfg = ExperimentConfig(seed=args.seed, n_scenes=args.scenes,
                               instructions_per_scene=args.per_scene,
                               noise=NoiseConfig(p_flip=p))
        result = run_experiment(cfg)
        wo, w = result.without_report, result.with_report
        print(f"{p:6.2f} | {wo.cell('ambiguous', 'sr').percent:16} "
              f"| {w.cell('ambiguous', 'sr').percent:15} "
              f"| {wo.cell('all', 'sr').percent:10} "
              f"| {w.cell('all', 'sr').percent:9}")


if __name__ == "__main__":
    main()
