"""A quick version of the simulation study: structure recovery and IBS.

Runs a few dozen trials of the tree-structured Weibull-I design and prints
how often each method recovers the true partition, together with the
median integrated Brier score against a root-only (single KM) baseline.

    python demos/small_benchmark.py [--trials 40] [--seed 1]
"""

from __future__ import annotations

import argparse
import time

from ltrctree.simulation import ScenarioSpec, run_ibs_experiment, run_recovery_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=40)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--n", type=int, default=300)
    args = ap.parse_args()

    spec = ScenarioSpec("tree", "weibull_i", n=args.n, truncation=2.0, censoring=0.2)
    t0 = time.perf_counter()
    rec = run_recovery_experiment(spec, trials=args.trials, seed=args.seed)
    print(f"structure recovery, n={args.n}, {args.trials} trials")
    for method, key, value in rec.summary:
        if key in ("recovery_rate", "mean_leaves"):
            print(f"  {method:8s} {key:14s} {value:6.2f}")

    ibs = run_ibs_experiment(spec, trials=args.trials, seed=args.seed + 1,
                             methods=("ltrcit", "ltrcart", "root"))
    print("\nintegrated Brier score")
    for method, key, value in ibs.summary:
        if key in ("median_ibs", "signed_rank_p"):
            print(f"  {method:16s} {key:14s} {value:.4g}")
    print(f"\n{time.perf_counter() - t0:.1f}s")


if __name__ == "__main__":
    main()
