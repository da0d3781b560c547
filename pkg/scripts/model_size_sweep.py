#!/usr/bin/env python3
"""Hidden-size sweep at a fixed prompt/step shape.

Emits one CSV row per hidden size. Example:

    python3 scripts/model_size_sweep.py --hidden 128 256 512 --reps 3
"""

import argparse

from maskfold.bench import BenchmarkSpec, Report, run_benchmark


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--hidden", type=int, nargs="+", default=[128, 256, 512])
    ap.add_argument("--batch", type=int, default=4)
    ap.add_argument("--layers", type=int, default=4)
    ap.add_argument("--heads", type=int, default=8)
    ap.add_argument("--prompt", type=int, default=32)
    ap.add_argument("--steps", type=int, default=32)
    ap.add_argument("--reps", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    print(Report.csv_header())
    for hidden in args.hidden:
        spec = BenchmarkSpec(
            batch=args.batch, hidden=hidden, layers=args.layers,
            heads=args.heads, prompt=args.prompt,
            max_seq=args.prompt + args.steps, vocab=256,
            mode="both", steps=args.steps, repetitions=args.reps,
            seed=args.seed,
        )
        print(run_benchmark(spec).csv_row(), flush=True)


if __name__ == "__main__":
    main()
