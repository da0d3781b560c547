#!/usr/bin/env python3
"""Closed-form memory distribution for large decoder stacks.

Evaluates the breakdown without allocating anything, so full-size shapes are
fine. Defaults mirror the classic 1024/24-layer and 4096/40-layer decoder
stacks at batch 16, sequence 1024, vocab 13672.

    python3 scripts/memory_distribution.py
"""

import argparse

from maskfold.bench import BenchmarkSpec, memory_report


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--batch", type=int, default=16)
    ap.add_argument("--seq", type=int, default=1024)
    ap.add_argument("--vocab", type=int, default=13672)
    ap.add_argument("--shapes", type=str, nargs="+",
                    default=["1024:24:16", "4096:40:32"],
                    help="hidden:layers:heads triples")
    args = ap.parse_args()

    print("hidden,layers,heads,weights_bytes,kv_cache_bytes,activation_bytes,"
          "buffer_bytes,total_bytes,weights_pct,kv_pct,activation_pct,buffer_pct")
    for shape in args.shapes:
        hidden, layers, heads = (int(x) for x in shape.split(":"))
        spec = BenchmarkSpec(
            batch=args.batch, hidden=hidden, layers=layers, heads=heads,
            prompt=args.seq, max_seq=args.seq, vocab=args.vocab, steps=0,
        )
        m = memory_report(spec).memory
        pct = {k: 100.0 * v / m["total"] for k, v in m.items()}
        print(f"{hidden},{layers},{heads},{m['weights']},{m['kv_cache']},"
              f"{m['activation']},{m['buffers']},{m['total']},"
              f"{pct['weights']:.1f},{pct['kv_cache']:.1f},"
              f"{pct['activation']:.1f},{pct['buffers']:.1f}")


if __name__ == "__main__":
    main()
