"""Shared configuration, tensor, and batch-description types.

Everything here is immutable after construction and safe to share across
concurrent workers. Numerics are 32-bit floats throughout; the
``datatype_label`` field on :class:`ModelConfig` is informational only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Hard capacity limits for the kernels in this package: hidden sizes up to
# 16384 and sequence lengths up to 4096 are supported by the folding scheme.
MAX_HIDDEN = 16384
MAX_SEQUENCE = 4096

FLOAT = np.float32


class ConfigError(ValueError):
    """A model configuration violates one of its invariants."""


def make_tensor(shape, data) -> np.ndarray:
    """Build a dense row-major float32 tensor, validating shape consistency.

    ``data`` may be any flat sequence or array; it is copied/cast to float32.
    Raises ``ValueError`` when any dimension is < 1 or when the element count
    does not match ``product(shape)``.
    """
    dims = tuple(int(d) for d in shape)
    if not dims:
        raise ValueError("tensor shape must have at least one dimension")
    if any(d < 1 for d in dims):
        raise ValueError(f"all dimensions must be >= 1, got {dims}")
    flat = np.ascontiguousarray(data, dtype=FLOAT).reshape(-1)
    expected = math.prod(dims)
    if flat.size != expected:
        raise ValueError(
            f"shape {dims} requires {expected} elements, got {flat.size}"
        )
    return flat.reshape(dims)


@dataclass(frozen=True)
class ModelConfig:
    """Architectural and capacity parameters of a decoder/encoder stack.

    ``batch_size``, ``max_prompt`` and ``max_sequence`` are capacities: runs
    may use smaller batches and shorter prompts, never larger ones.
    """

    batch_size: int
    hidden_size: int
    layer_count: int
    head_count: int
    max_prompt: int
    max_sequence: int
    datatype_label: str = "fp32"

    @property
    def head_dim(self) -> int:
        return self.hidden_size // self.head_count


def validate_config(cfg: ModelConfig) -> ModelConfig:
    """Check every ModelConfig invariant; raise ConfigError naming the first failure."""
    if cfg.batch_size < 1:
        raise ConfigError("batch size must be >= 1")
    if cfg.hidden_size < 1:
        raise ConfigError("hidden size must be >= 1")
    if cfg.layer_count < 0:
        raise ConfigError("layer count must be >= 0")
    if cfg.head_count < 1:
        raise ConfigError("head count must be >= 1")
    if cfg.max_prompt < 1:
        raise ConfigError("max prompt must be >= 1")
    if cfg.hidden_size % cfg.head_count != 0:
        raise ConfigError(
            f"hidden not divisible by heads ({cfg.hidden_size} % {cfg.head_count} != 0)"
        )
    if cfg.max_prompt > cfg.max_sequence:
        raise ConfigError(
            f"max prompt {cfg.max_prompt} exceeds max sequence {cfg.max_sequence}"
        )
    if cfg.hidden_size > MAX_HIDDEN:
        raise ConfigError(f"hidden exceeds {MAX_HIDDEN} (got {cfg.hidden_size})")
    if cfg.max_sequence > MAX_SEQUENCE:
        raise ConfigError(
            f"max sequence exceeds {MAX_SEQUENCE} (got {cfg.max_sequence})"
        )
    return cfg


@dataclass(frozen=True)
class BatchDescriptor:
    """Per-sequence padding of an uneven batch padded to a common length.

    Left-padding convention: pad tokens of sequence ``i`` occupy slots
    ``[0, padding_len[i])``; real content starts at the pad offset. Every
    sequence therefore ends at slot ``seq_len - 1``, which is what lets the
    generation loop read next-token logits from the last slot of every row.
    """

    seq_len: int
    padding_len: tuple[int, ...]
    batch: int

    def __post_init__(self):
        if self.batch < 1:
            raise ValueError("batch must be >= 1")
        if len(self.padding_len) != self.batch:
            raise ValueError(
                f"padding_len has {len(self.padding_len)} entries for batch {self.batch}"
            )
        for i, p in enumerate(self.padding_len):
            if not 0 <= p < self.seq_len:
                raise ValueError(
                    f"padding_len[{i}]={p} outside [0, {self.seq_len})"
                )


def make_batch(prompt_lengths, target_len: int | None = None) -> BatchDescriptor:
    """Describe a batch of uneven prompts padded to a common length.

    ``target_len`` defaults to the longest prompt (max-length strategy), so
    the longest sequence carries zero padding and all sequences can be
    decoded in parallel.
    """
    lengths = [int(n) for n in prompt_lengths]
    if not lengths:
        raise ValueError("prompt_lengths must not be empty")
    if any(n < 1 for n in lengths):
        raise ValueError("every prompt length must be >= 1")
    longest = max(lengths)
    if target_len is None:
        target_len = longest
    elif target_len < longest:
        raise ValueError(
            f"target_len {target_len} shorter than longest prompt {longest}"
        )
    pads = tuple(target_len - n for n in lengths)
    return BatchDescriptor(seq_len=target_len, padding_len=pads, batch=len(lengths))
