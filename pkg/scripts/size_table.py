#!/usr/bin/env python3
"""Null rejection-frequency table across DGP settings.

Runs the size experiment for the shrinkage test and the gamma = 0 benchmark
on a (setting, n, d) grid and prints one row per cell.  Writes the
full-precision table to --out if given.

    python scripts/size_table.py --settings I II III IV --ns 500 1000 \
        --ds 10 100 --reps 2000 --seed 20 --out size_table.csv
"""

import argparse
import time

from slrt.dataio import write_result_csv
from slrt.datagen import Setting
from slrt.experiments import ExperimentSpec, run_size


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--settings", nargs="+", default=["I"],
                    choices=[s.name for s in Setting])
    ap.add_argument("--ns", nargs="+", type=int, default=[500, 1000])
    ap.add_argument("--ds", nargs="+", type=int, default=[10])
    ap.add_argument("--reps", type=int, default=2000)
    ap.add_argument("--level", type=float, default=0.05)
    ap.add_argument("--seed", type=int, default=20)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()

    spec = ExperimentSpec(
        kind="size",
        settings=tuple(Setting[s] for s in args.settings),
        ns=tuple(args.ns),
        ds=tuple(args.ds),
        reps=args.reps,
        level=args.level,
        seed=args.seed,
    )
    t0 = time.perf_counter()
    result = run_size(spec)
    elapsed = time.perf_counter() - t0

    print(f"{'setting':>7} {'n':>6} {'d':>4} {'method':>10} "
          f"{'freq':>8} {'stderr':>8}")
    for c in result.cells:
        print(f"{c.setting:>7} {c.n:>6} {c.d:>4} {c.method:>10} "
              f"{c.rejection_frequency:8.4f} {c.mc_stderr:8.4f}")
    print(f"# {args.reps} reps, level {args.level}, seed {args.seed}, "
          f"{elapsed:.1f}s")
    if args.out:
        write_result_csv(args.out, result)
        print(f"# wrote {args.out}")


if __name__ == "__main__":
    main()
