#!/usr/bin/env python3
"""Power of the shrinkage test and the benchmark over subgroup effect sizes.

Each effect size gets its own experiment: a null phase for empirical
(size-adjusted) critical values, then an alternative phase drawing the
subgroup indicator from the logistic model with the given lambda.  The null
phase reuses the same replication streams across effect sizes, so rows are
comparable.

    python scripts/power_table.py --setting I --n 1000 --d 10 \
        --lams 0.5 1.0 1.5 2.0 --reps 1000 --seed 20
"""

import argparse
import csv
import time

from slrt.datagen import Setting
from slrt.experiments import ExperimentSpec, run_power


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--setting", default="I", choices=[s.name for s in Setting])
    ap.add_argument("--n", type=int, default=1000)
    ap.add_argument("--d", type=int, default=10)
    ap.add_argument("--lams", nargs="+", type=float, default=[0.5, 1.0, 1.5, 2.0])
    ap.add_argument("--reps", type=int, default=1000)
    ap.add_argument("--level", type=float, default=0.05)
    ap.add_argument("--seed", type=int, default=20)
    ap.add_argument("--no-size-adjust", action="store_true",
                    help="use the asymptotic half-chi-square critical value")
    ap.add_argument("--out", default=None)
    args = ap.parse_args()

    rows = []
    print(f"{'lambda':>7} {'slrt':>8} {'benchmark':>10} {'gap':>8}")
    for lam in args.lams:
        spec = ExperimentSpec(
            kind="power",
            settings=(Setting[args.setting],),
            ns=(args.n,),
            ds=(args.d,),
            reps=args.reps,
            level=args.level,
            seed=args.seed,
            size_adjust=not args.no_size_adjust,
            lambda_true=lam,
        )
        t0 = time.perf_counter()
        result = run_power(spec)
        elapsed = time.perf_counter() - t0
        p_slrt = result.cell(args.setting, args.n, args.d, "slrt")
        p_bench = result.cell(args.setting, args.n, args.d, "benchmark")
        gap = p_slrt.rejection_frequency - p_bench.rejection_frequency
        print(f"{lam:7.2f} {p_slrt.rejection_frequency:8.4f} "
              f"{p_bench.rejection_frequency:10.4f} {gap:8.4f}   # {elapsed:.0f}s")
        rows.append((args.setting, args.n, args.d, lam,
                     repr(p_slrt.rejection_frequency), repr(p_slrt.mc_stderr),
                     repr(p_bench.rejection_frequency), repr(p_bench.mc_stderr)))
    print(f"# {args.reps} reps, level {args.level}, seed {args.seed}, "
          f"size-adjusted: {not args.no_size_adjust}")

    if args.out:
        with open(args.out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["setting", "n", "d", "lambda", "slrt_power",
                             "slrt_stderr", "benchmark_power",
                             "benchmark_stderr"])
            writer.writerows(rows)
        print(f"# wrote {args.out}")


if __name__ == "__main__":
    main()
