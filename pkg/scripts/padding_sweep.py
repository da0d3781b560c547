#!/usr/bin/env python3
"""Padding-ratio sweep: fused vs reference latency as pads fill the batch.

Emits one CSV row per ratio. Example:

    python3 scripts/padding_sweep.py --ratios 0 0.25 0.5 0.75 --reps 3
"""

import argparse

from maskfold.bench import BenchmarkSpec, Report, run_benchmark


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--ratios", type=float, nargs="+",
                    default=[0.0, 0.25, 0.5, 0.75])
    ap.add_argument("--batch", type=int, default=8)
    ap.add_argument("--hidden", type=int, default=256)
    ap.add_argument("--layers", type=int, default=4)
    ap.add_argument("--heads", type=int, default=8)
    ap.add_argument("--prompt", type=int, default=64)
    ap.add_argument("--steps", type=int, default=32)
    ap.add_argument("--reps", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    print(Report.csv_header())
    for ratio in args.ratios:
        spec = BenchmarkSpec(
            batch=args.batch, hidden=args.hidden, layers=args.layers,
            heads=args.heads, prompt=args.prompt,
            max_seq=args.prompt + args.steps, vocab=256,
            padding_ratio=ratio, mode="both", steps=args.steps,
            repetitions=args.reps, seed=args.seed,
        )
        print(run_benchmark(spec).csv_row(), flush=True)


if __name__ == "__main__":
    main()
