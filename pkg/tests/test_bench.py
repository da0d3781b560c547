import json

import numpy as np
import pytest

from maskfold import BenchmarkSpec, GenerationRequest, generate, memory_report, run_benchmark
from maskfold.bench import (
    PRESETS,
    Report,
    main,
    prompt_lengths_for_ratio,
)

from conftest import tiny_config


def tiny_spec(**overrides):
    base = dict(batch=2, hidden=8, layers=2, heads=2, prompt=6, max_seq=12,
                vocab=16, steps=4, repetitions=1, seed=0)
    base.update(overrides)
    return BenchmarkSpec(**base)


class TestSpec:
    def test_padding_ratio_range(self):
        with pytest.raises(ValueError):
            tiny_spec(padding_ratio=1.0)
        with pytest.raises(ValueError):
            tiny_spec(padding_ratio=-0.1)

    def test_repetitions_positive(self):
        with pytest.raises(ValueError):
            tiny_spec(repetitions=0)

    def test_mode_checked(self):
        with pytest.raises(ValueError):
            tiny_spec(mode="gpu")


class TestPromptLengths:
    def test_zero_ratio(self):
        assert prompt_lengths_for_ratio(4, 8, 0.0) == [8, 8, 8, 8]

    def test_half_ratio(self):
        lengths = prompt_lengths_for_ratio(4, 8, 0.5)
        assert lengths[0] == 8
        assert all(1 <= n <= 8 for n in lengths)
        pads = sum(8 - n for n in lengths)
        assert pads == round(0.5 * 4 * 8)

    def test_high_ratio_clamped(self):
        lengths = prompt_lengths_for_ratio(2, 4, 0.7)
        assert lengths[0] == 4
        assert lengths[1] >= 1

    def test_single_sequence_cannot_pad(self):
        with pytest.raises(ValueError):
            prompt_lengths_for_ratio(1, 8, 0.5)


class TestRunBenchmark:
    def test_both_modes_report(self):
        report = run_benchmark(tiny_spec())
        assert report.tokens_match is True
        assert report.speedup is not None
        assert len(report.wall_times["fused"]) == 1
        assert len(report.wall_times["reference"]) == 1
        assert report.prompt_passes == {"fused": 1, "reference": 6}
        assert report.layer_invocations["reference"] > report.layer_invocations["fused"]

    def test_reference_only_single_sample(self):
        report = run_benchmark(tiny_spec(mode="reference", repetitions=1))
        assert list(report.wall_times) == ["reference"]
        assert len(report.wall_times["reference"]) == 1
        assert report.speedup is None

    def test_memory_sum_identity_and_bound(self):
        spec = tiny_spec(repetitions=2)
        report = run_benchmark(spec)
        m = report.memory
        assert m["total"] == m["weights"] + m["kv_cache"] + m["activation"] + m["buffers"]
        cfg = spec.config()
        from maskfold import buffer_bound
        assert m["buffers"] <= 4 * buffer_bound(cfg, spec.prompt)
        assert m["kv_cache"] == 4 * 2 * 2 * 8 * 12 * 2  # 2bhsl * itemsize

    def test_padded_batch_tokens_match_per_sequence_runs(self):
        spec = tiny_spec(batch=3, padding_ratio=0.4, steps=5)
        report = run_benchmark(spec)
        assert report.tokens_match is True
        # the padded batch generates the same tokens each sequence would alone
        from maskfold import random_weights
        cfg = spec.config()
        weights = random_weights(cfg, spec.vocab, spec.seed)
        rng = np.random.default_rng(spec.seed)
        lengths = prompt_lengths_for_ratio(spec.batch, spec.prompt,
                                           spec.padding_ratio)
        prompts = [[int(t) for t in rng.integers(0, spec.vocab, size=n)]
                   for n in lengths]
        batched = generate(weights, GenerationRequest(prompts, spec.steps), cfg)
        for i, prompt in enumerate(prompts):
            alone = generate(weights,
                             GenerationRequest([prompt], spec.steps), cfg)
            assert np.array_equal(batched[i], alone[0])


class TestMemoryReport:
    def test_full_size_formula_values(self):
        spec = BenchmarkSpec(batch=16, hidden=1024, layers=24, heads=16,
                             prompt=1024, max_seq=1024, vocab=13672,
                             mode="fused", steps=0)
        report = memory_report(spec)
        m = report.memory
        assert m["kv_cache"] == 805_306_368 * 4 == 3_221_225_472
        assert m["activation"] == 33_554_432 * 4
        assert m["total"] == sum(m[k] for k in
                                 ("weights", "kv_cache", "activation", "buffers"))

    def test_zero_layer_degenerate(self):
        report = memory_report(tiny_spec(layers=0))
        assert report.memory["kv_cache"] == 0

    def test_kv_share_grows_with_layers(self):
        shares = []
        buffers = []
        for layers in (2, 4, 8):
            m = memory_report(tiny_spec(layers=layers)).memory
            shares.append(m["kv_cache"] / m["total"])
            buffers.append(m["buffers"])
        assert shares[0] < shares[1] < shares[2]
        assert buffers[0] == buffers[1] == buffers[2]

    def test_weights_and_caches_dominate_at_scale(self):
        m = memory_report(BenchmarkSpec(batch=16, hidden=1024, layers=24,
                                        heads=16, prompt=1024, max_seq=1024,
                                        vocab=13672, steps=0)).memory
        # buffers are reported at their upper bound and still lose
        assert m["weights"] + m["kv_cache"] > 0.7 * m["total"]
        assert m["weights"] + m["kv_cache"] > m["activation"] + m["buffers"]


class TestCli:
    def test_json_lines_output(self, capsys):
        rc = main(["--config", "A", "--steps", "2", "--prompt", "4",
                   "--max-seq", "8", "--hidden", "16", "--layers", "1",
                   "--heads", "2", "--batch", "2", "--reps", "1"])
        assert rc == 0
        line = capsys.readouterr().out.strip()
        payload = json.loads(line)
        assert payload["schema"] == Report.SCHEMA
        assert payload["tokens_match"] is True
        assert payload["memory"]["total"] == sum(
            payload["memory"][k]
            for k in ("weights", "kv_cache", "activation", "buffers"))

    def test_csv_output(self, capsys):
        rc = main(["--batch", "2", "--hidden", "16", "--layers", "1",
                   "--heads", "2", "--prompt", "4", "--max-seq", "8",
                   "--steps", "2", "--report", "csv"])
        assert rc == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0] == Report.csv_header()
        assert len(lines) == 2
        assert len(lines[1].split(",")) == len(Report.CSV_FIELDS)

    def test_memory_only_accepts_full_size(self, capsys):
        rc = main(["--batch", "16", "--hidden", "1024", "--layers", "24",
                   "--heads", "16", "--prompt", "1024", "--max-seq", "1024",
                   "--memory-only"])
        assert rc == 0
        payload = json.loads(capsys.readouterr().out.strip())
        assert payload["memory"]["kv_cache"] == 3_221_225_472

    def test_invalid_spec_fails_with_message(self, capsys):
        rc = main(["--hidden", "10", "--heads", "3"])
        assert rc != 0
        assert "error" in capsys.readouterr().err

    def test_presets_exist(self):
        for name in ("A", "B", "C"):
            assert set(PRESETS[name]) == {
                "batch", "hidden", "layers", "heads", "prompt", "max_seq",
                "vocab", "steps",
            }
