"""Benchmark harness and CLI: latency, work counters, memory reports.

Runs seeded fake-input generation through the pooled fused path and/or the
naive explicit-mask reference on the same inputs, reporting wall times
(median of N repetitions, warm-up discarded), layer-invocation counters, the
fused/reference speedup, and a memory breakdown whose categories always sum
to the reported total.

Presets A/B/C are desk-scale shrinks of the usual GPU benchmark shapes; any
size valid under the configuration limits is accepted in ``--memory-only``
mode, which evaluates the closed-form sizes without allocating.

Report schemas (versioned):
  json-lines: one JSON object per line, key ``schema`` = ``maskfold-report/1``.
  csv: fixed column order, see ``Report.CSV_FIELDS``.
"""

from __future__ import annotations

import argparse
import json
import statistics
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from .core import ConfigError, ModelConfig, validate_config
from .memory import (
    AllocationLog,
    BufferPool,
    activation_elements,
    buffer_bound,
    kv_cache_elements,
)
from .reference import reference_generate
from .runtime import GenerationRequest, RunTrace, generate
from .weights import random_weights, weight_elements

FLOAT_BYTES = 4

PRESETS: dict[str, dict[str, int]] = {
    "A": dict(batch=4, hidden=256, layers=4, heads=8, prompt=64, max_seq=128,
              vocab=256, steps=64),
    "B": dict(batch=8, hidden=512, layers=4, heads=8, prompt=64, max_seq=128,
              vocab=256, steps=64),
    "C": dict(batch=4, hidden=512, layers=4, heads=8, prompt=32, max_seq=64,
              vocab=256, steps=32),
}

MODES = ("fused", "reference", "both")


@dataclass
class BenchmarkSpec:
    batch: int
    hidden: int
    layers: int
    heads: int
    prompt: int
    max_seq: int
    vocab: int = 256
    padding_ratio: float = 0.0
    mode: str = "both"
    steps: int = 64
    repetitions: int = 1
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.padding_ratio < 1.0:
            raise ValueError(
                f"padding_ratio must be in [0, 1), got {self.padding_ratio}"
            )
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")

    def config(self) -> ModelConfig:
        return ModelConfig(
            batch_size=self.batch,
            hidden_size=self.hidden,
            layer_count=self.layers,
            head_count=self.heads,
            max_prompt=self.prompt,
            max_sequence=self.max_seq,
        )

    def as_dict(self) -> dict:
        return {
            "batch": self.batch, "hidden": self.hidden, "layers": self.layers,
            "heads": self.heads, "prompt": self.prompt, "max_seq": self.max_seq,
            "vocab": self.vocab, "padding_ratio": self.padding_ratio,
            "mode": self.mode, "steps": self.steps,
            "repetitions": self.repetitions, "seed": self.seed,
        }


@dataclass
class Report:
    SCHEMA = "maskfold-report/1"
    CSV_FIELDS = (
        "batch", "hidden", "layers", "heads", "prompt", "max_seq",
        "padding_ratio", "steps", "repetitions", "seed", "mode",
        "median_fused_s", "median_reference_s", "speedup",
        "prompt_passes_fused", "prompt_passes_reference",
        "layer_invocations_fused", "layer_invocations_reference",
        "tokens_match", "weights_bytes", "kv_cache_bytes",
        "activation_bytes", "buffer_bytes", "total_bytes",
    )

    spec: dict
    mode: str
    wall_times: dict[str, list[float]] = field(default_factory=dict)
    median_seconds: dict[str, float] = field(default_factory=dict)
    layer_invocations: dict[str, int] = field(default_factory=dict)
    prompt_passes: dict[str, int] = field(default_factory=dict)
    speedup: float | None = None
    tokens_match: bool | None = None
    memory: dict[str, int] = field(default_factory=dict)
    pool: dict | None = None

    def to_json_line(self) -> str:
        return json.dumps({
            "schema": self.SCHEMA,
            "spec": self.spec,
            "mode": self.mode,
            "wall_times": self.wall_times,
            "median_seconds": self.median_seconds,
            "layer_invocations": self.layer_invocations,
            "prompt_passes": self.prompt_passes,
            "speedup": self.speedup,
            "tokens_match": self.tokens_match,
            "memory": self.memory,
            "pool": self.pool,
        })

    @classmethod
    def csv_header(cls) -> str:
        return ",".join(cls.CSV_FIELDS)

    def csv_row(self) -> str:
        def fmt(value) -> str:
            if value is None:
                return ""
            if isinstance(value, float):
                return f"{value:.6g}"
            return str(value)

        row = dict(self.spec)
        row["mode"] = self.mode
        row["median_fused_s"] = self.median_seconds.get("fused")
        row["median_reference_s"] = self.median_seconds.get("reference")
        row["speedup"] = self.speedup
        row["prompt_passes_fused"] = self.prompt_passes.get("fused")
        row["prompt_passes_reference"] = self.prompt_passes.get("reference")
        row["layer_invocations_fused"] = self.layer_invocations.get("fused")
        row["layer_invocations_reference"] = self.layer_invocations.get("reference")
        row["tokens_match"] = self.tokens_match
        for key in ("weights", "kv_cache", "activation", "buffers", "total"):
            row[f"{key}_bytes" if key != "buffers" else "buffer_bytes"] = (
                self.memory.get(key)
            )
        return ",".join(fmt(row.get(name)) for name in self.CSV_FIELDS)


def prompt_lengths_for_ratio(batch: int, prompt: int, ratio: float) -> list[int]:
    """Per-sequence prompt lengths whose pad fraction under max-length padding
    approximates ``ratio``. The first sequence stays full length (it defines
    the padded width); pads are spread evenly over the rest, capped so every
    sequence keeps at least one token."""
    if not 0.0 <= ratio < 1.0:
        raise ValueError(f"padding ratio must be in [0, 1), got {ratio}")
    lengths = [prompt] * batch
    total_pad = round(ratio * batch * prompt)
    if total_pad == 0:
        return lengths
    if batch == 1:
        raise ValueError("cannot pad a single-sequence batch: the longest "
                         "sequence always has zero padding")
    remaining = total_pad
    for i in range(1, batch):
        share = min(prompt - 1, -(-remaining // (batch - i)))
        lengths[i] = prompt - share
        remaining -= share
        if remaining <= 0:
            break
    return lengths


def _build_inputs(spec: BenchmarkSpec):
    cfg = validate_config(spec.config())
    rng = np.random.default_rng(spec.seed)
    lengths = prompt_lengths_for_ratio(spec.batch, spec.prompt, spec.padding_ratio)
    prompts = [
        [int(t) for t in rng.integers(0, spec.vocab, size=n)] for n in lengths
    ]
    weights = random_weights(cfg, spec.vocab, spec.seed)
    req = GenerationRequest(prompts=prompts, steps=spec.steps)
    return cfg, weights, req


def _run_once(mode: str, weights, req, cfg):
    trace = RunTrace()
    log = AllocationLog()
    if mode == "fused":
        pool = BufferPool(log=log)
        tokens = generate(weights, req, cfg, pool=pool, log=log, trace=trace)
    else:
        pool = None
        tokens = reference_generate(weights, req, cfg, log=log, trace=trace)
    return tokens, trace, pool


def run_benchmark(spec: BenchmarkSpec) -> Report:
    """Generate with seeded fake inputs in the selected mode(s) and report."""
    cfg, weights, req = _build_inputs(spec)
    modes = ["fused", "reference"] if spec.mode == "both" else [spec.mode]

    report = Report(spec=spec.as_dict(), mode=spec.mode)
    tokens_by_mode: dict[str, np.ndarray] = {}
    fused_pool: BufferPool | None = None
    for mode in modes:
        _run_once(mode, weights, req, cfg)  # warm-up, discarded
        times = []
        tokens = trace = pool = None
        for _ in range(spec.repetitions):
            start = time.perf_counter()
            tokens, trace, pool = _run_once(mode, weights, req, cfg)
            times.append(time.perf_counter() - start)
        report.wall_times[mode] = times
        report.median_seconds[mode] = statistics.median(times)
        report.layer_invocations[mode] = trace.layer_invocations
        report.prompt_passes[mode] = trace.prompt_passes
        tokens_by_mode[mode] = tokens
        if mode == "fused":
            fused_pool = pool

    if len(modes) == 2:
        report.speedup = (
            report.median_seconds["reference"] / report.median_seconds["fused"]
        )
        report.tokens_match = bool(
            np.array_equal(tokens_by_mode["fused"], tokens_by_mode["reference"])
        )

    weights_bytes = weights.nbytes()
    if fused_pool is not None:
        kv_bytes = kv_cache_elements(cfg) * FLOAT_BYTES
        act_bytes = activation_elements(cfg) * FLOAT_BYTES
        buf_bytes = fused_pool.total_capacity * FLOAT_BYTES
        report.pool = fused_pool.stats()
    else:
        kv_bytes = act_bytes = buf_bytes = 0
    report.memory = {
        "weights": weights_bytes,
        "kv_cache": kv_bytes,
        "activation": act_bytes,
        "buffers": buf_bytes,
        "total": weights_bytes + kv_bytes + act_bytes + buf_bytes,
    }
    return report


def memory_report(spec: BenchmarkSpec) -> Report:
    """Closed-form memory breakdown without allocating anything.

    Buffer bytes are reported at their upper bound b*p*(6h + heads*p); live
    runs stay at or below it.
    """
    cfg = validate_config(spec.config())
    weights_bytes = weight_elements(cfg, spec.vocab) * FLOAT_BYTES
    kv_bytes = kv_cache_elements(cfg) * FLOAT_BYTES
    act_bytes = activation_elements(cfg) * FLOAT_BYTES
    buf_bytes = buffer_bound(cfg, spec.prompt) * FLOAT_BYTES
    report = Report(spec=spec.as_dict(), mode="memory")
    report.memory = {
        "weights": weights_bytes,
        "kv_cache": kv_bytes,
        "activation": act_bytes,
        "buffers": buf_bytes,
        "total": weights_bytes + kv_bytes + act_bytes + buf_bytes,
    }
    return report


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="maskfold-bench",
        description="Latency / work-count / memory benchmark for the fused "
                    "runtime against the naive explicit-mask reference.",
    )
    p.add_argument("--config", choices=[*PRESETS, "custom"], default="custom",
                   help="preset shape; explicit flags override preset values")
    p.add_argument("--batch", type=int)
    p.add_argument("--hidden", type=int)
    p.add_argument("--layers", type=int)
    p.add_argument("--heads", type=int)
    p.add_argument("--prompt", type=int)
    p.add_argument("--max-seq", type=int, dest="max_seq")
    p.add_argument("--vocab", type=int)
    p.add_argument("--padding-ratio", type=float, default=0.0,
                   dest="padding_ratio")
    p.add_argument("--mode", choices=MODES, default="both")
    p.add_argument("--steps", type=int)
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", choices=["json-lines", "csv"],
                   default="json-lines")
    p.add_argument("--memory-only", action="store_true",
                   help="evaluate the closed-form memory breakdown without "
                        "running (any valid size accepted)")
    return p


def spec_from_args(args: argparse.Namespace) -> BenchmarkSpec:
    base = dict(PRESETS["A"] if args.config == "custom" else PRESETS[args.config])
    for key in ("batch", "hidden", "layers", "heads", "prompt", "max_seq",
                "vocab", "steps"):
        value = getattr(args, key)
        if value is not None:
            base[key] = value
    return BenchmarkSpec(
        batch=base["batch"], hidden=base["hidden"], layers=base["layers"],
        heads=base["heads"], prompt=base["prompt"], max_seq=base["max_seq"],
        vocab=base["vocab"], padding_ratio=args.padding_ratio, mode=args.mode,
        steps=base["steps"], repetitions=args.reps, seed=args.seed,
    )


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = spec_from_args(args)
        report = memory_report(spec) if args.memory_only else run_benchmark(spec)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.report == "csv":
        print(Report.csv_header())
        print(report.csv_row())
    else:
        print(report.to_json_line())
    return 0


if __name__ == "__main__":
    sys.exit(main())
