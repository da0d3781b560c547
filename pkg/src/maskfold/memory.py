"""Preallocated decoding caches and a reusing scratch-buffer pool.

Two tiers of memory management:

* **Caches** (K/V and activations) have a predictable maximum size, so they
  are allocated once up front (2*b*h*s*l elements for the K/V caches,
  2*b*h*p for the two activation regions) and never grow during decoding.

* **Buffers** hold the returns of individual operators and are handed out by
  :class:`BufferPool` with a scope-dependent reuse policy: within a module an
  idle buffer is reused only on an exact capacity match (no fragmentation);
  across modules the first idle buffer large enough is reused (no duplicate
  allocation). Idle buffers are never returned to the system during a run.

Every allocation decision is recorded in an :class:`AllocationLog`, which is
what the benchmark's memory reports and the no-malloc-during-decoding
assertions read.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import IO, Iterator

import numpy as np

from .core import FLOAT, ModelConfig, validate_config


class PoolError(RuntimeError):
    """Misuse of the buffer pool (double release, use after release, ...)."""


class CacheOverflowError(RuntimeError):
    """A cache write would exceed the preallocated maximum sequence length."""


SCOPE_WITHIN = "within"
SCOPE_ACROSS = "across"
_SCOPES = (SCOPE_WITHIN, SCOPE_ACROSS)


@dataclass(frozen=True)
class AllocationRecord:
    event: str  # "request" | "release" | "preallocate" | "allocate"
    size: int  # element count
    decision: str  # "malloc" | "reuse" | "idle"
    tag: str

    @property
    def reused(self) -> bool:
        return self.decision == "reuse"

    def line(self) -> str:
        return f"{self.event}\t{self.size}\t{self.decision}\t{self.tag}"


class AllocationLog:
    """Append-only record of every cache/buffer allocation decision."""

    def __init__(self):
        self.records: list[AllocationRecord] = []

    def record(self, event: str, size: int, decision: str, tag: str) -> None:
        self.records.append(AllocationRecord(event, int(size), decision, tag))

    def lines(self) -> Iterator[str]:
        for rec in self.records:
            yield rec.line()

    def dump(self, stream: IO[str]) -> None:
        for line in self.lines():
            stream.write(line + "\n")

    def count(self, event: str | None = None, decision: str | None = None,
              tag_prefix: str | None = None) -> int:
        n = 0
        for rec in self.records:
            if event is not None and rec.event != event:
                continue
            if decision is not None and rec.decision != decision:
                continue
            if tag_prefix is not None and not rec.tag.startswith(tag_prefix):
                continue
            n += 1
        return n


@dataclass
class _Buffer:
    storage: np.ndarray  # flat float32, len == capacity
    idle: bool
    tag: str

    @property
    def capacity(self) -> int:
        return self.storage.size


class BufferHandle:
    """Live claim on a pool buffer. Release exactly once; views die with it."""

    def __init__(self, pool: "BufferPool", index: int, size: int):
        self._pool = pool
        self._index = index
        self.size = size
        self._alive = True

    @property
    def alive(self) -> bool:
        return self._alive

    @property
    def capacity(self) -> int:
        return self._pool._buffers[self._index].capacity

    def view(self, shape) -> np.ndarray:
        """Ndarray view of the first prod(shape) elements (<= requested size)."""
        if not self._alive:
            raise PoolError("view() on a released buffer handle")
        count = math.prod(shape)
        if count > self.size:
            raise PoolError(
                f"view shape {tuple(shape)} needs {count} elements, handle holds {self.size}"
            )
        return self._pool._buffers[self._index].storage[:count].reshape(shape)

    def release(self) -> None:
        if not self._alive:
            raise PoolError("buffer handle released twice")
        self._alive = False
        self._pool._release(self._index, self.size)


class BufferPool:
    """List of reusable scratch buffers with the two-scope reuse policy.

    Buffers transition in-use <-> idle; idle buffers are kept for the life of
    the pool. One live handle per in-use buffer.
    """

    def __init__(self, log: AllocationLog | None = None):
        self.log = log if log is not None else AllocationLog()
        self._buffers: list[_Buffer] = []
        self._in_use_capacity = 0
        self._peak_in_use = 0
        self._malloc_count = 0
        self._reuse_count = 0

    def request(self, size: int, scope: str = SCOPE_WITHIN, tag: str = "") -> BufferHandle:
        """Claim a buffer of at least ``size`` elements.

        ``scope="within"`` reuses an idle buffer only on an exact capacity
        match; ``scope="across"`` reuses the first idle buffer with capacity
        >= size (list order). Otherwise a new buffer is allocated.
        """
        size = int(size)
        if size < 1:
            raise ValueError(f"buffer size must be >= 1, got {size}")
        if scope not in _SCOPES:
            raise ValueError(f"scope must be one of {_SCOPES}, got {scope!r}")

        index = None
        for i, buf in enumerate(self._buffers):
            if not buf.idle:
                continue
            if scope == SCOPE_WITHIN and buf.capacity == size:
                index = i
                break
            if scope == SCOPE_ACROSS and buf.capacity >= size:
                index = i
                break

        if index is None:
            storage = np.empty(size, dtype=FLOAT)
            self._buffers.append(_Buffer(storage=storage, idle=False, tag=tag))
            index = len(self._buffers) - 1
            self._malloc_count += 1
            self.log.record("request", size, "malloc", tag)
        else:
            buf = self._buffers[index]
            buf.idle = False
            buf.tag = tag
            self._reuse_count += 1
            self.log.record("request", size, "reuse", tag)

        self._in_use_capacity += self._buffers[index].capacity
        self._peak_in_use = max(self._peak_in_use, self._in_use_capacity)
        return BufferHandle(self, index, size)

    def _release(self, index: int, size: int) -> None:
        buf = self._buffers[index]
        if buf.idle:
            raise PoolError("buffer already idle")
        buf.idle = True
        self._in_use_capacity -= buf.capacity
        self.log.record("release", size, "idle", buf.tag)

    @property
    def total_capacity(self) -> int:
        return sum(buf.capacity for buf in self._buffers)

    @property
    def idle_capacities(self) -> list[int]:
        return [buf.capacity for buf in self._buffers if buf.idle]

    def stats(self) -> dict:
        return {
            "total_capacity": self.total_capacity,
            "peak_in_use": self._peak_in_use,
            "malloc_count": self._malloc_count,
            "reuse_count": self._reuse_count,
        }


def kv_cache_elements(cfg: ModelConfig) -> int:
    """Closed-form K/V cache size: 2 * b * h * s * l elements."""
    return 2 * cfg.batch_size * cfg.hidden_size * cfg.max_sequence * cfg.layer_count


def activation_elements(cfg: ModelConfig) -> int:
    """Closed-form activation cache size: 2 * b * h * p elements."""
    return 2 * cfg.batch_size * cfg.hidden_size * cfg.max_prompt


def buffer_bound(cfg: ModelConfig, prompt: int) -> int:
    """Upper bound on total pooled-buffer elements for a layer trace:
    b * prompt * (6 * h + head_count * prompt)."""
    if prompt > cfg.max_prompt:
        raise ValueError(f"prompt {prompt} exceeds max prompt {cfg.max_prompt}")
    return cfg.batch_size * prompt * (
        6 * cfg.hidden_size + cfg.head_count * prompt
    )


class KVCache:
    """Per-layer key/value storage for incremental decoding.

    Layout is [batch, head_count, max_sequence, head_dim] per tensor, filled
    left to right; all sequences of a max-length-padded batch advance in
    lockstep, so the fill level is a single cursor exposed per-sequence via
    ``filled_len``.
    """

    def __init__(self, cfg: ModelConfig, log: AllocationLog | None = None):
        validate_config(cfg)
        b, s = cfg.batch_size, cfg.max_sequence
        heads, hd = cfg.head_count, cfg.head_dim
        self.config = cfg
        self.head_count = heads
        self.max_sequence = s
        self._k = [
            np.zeros((b, heads, s, hd), dtype=FLOAT) for _ in range(cfg.layer_count)
        ]
        self._v = [
            np.zeros((b, heads, s, hd), dtype=FLOAT) for _ in range(cfg.layer_count)
        ]
        self._filled = 0
        if log is not None:
            log.record("preallocate", kv_cache_elements(cfg), "malloc", "kv_cache")

    @property
    def filled(self) -> int:
        return self._filled

    @property
    def filled_len(self) -> np.ndarray:
        return np.full(self.config.batch_size, self._filled, dtype=np.int64)

    def element_count(self) -> int:
        return sum(a.size for a in self._k) + sum(a.size for a in self._v)

    def nbytes(self) -> int:
        return self.element_count() * FLOAT().itemsize

    def write(self, layer: int, start: int, k: np.ndarray, v: np.ndarray) -> None:
        """Store projections for slots [start, start+t): k, v are [b, t, h]."""
        b, t, h = k.shape
        if start + t > self.max_sequence:
            raise CacheOverflowError(
                f"write to slots [{start}, {start + t}) exceeds max sequence "
                f"{self.max_sequence}"
            )
        heads = self.head_count
        hd = h // heads
        self._k[layer][:b, :, start : start + t, :] = (
            k.reshape(b, t, heads, hd).transpose(0, 2, 1, 3)
        )
        self._v[layer][:b, :, start : start + t, :] = (
            v.reshape(b, t, heads, hd).transpose(0, 2, 1, 3)
        )

    def keys(self, layer: int, length: int, batch: int | None = None) -> np.ndarray:
        b = self.config.batch_size if batch is None else batch
        return self._k[layer][:b, :, :length, :]

    def values(self, layer: int, length: int, batch: int | None = None) -> np.ndarray:
        b = self.config.batch_size if batch is None else batch
        return self._v[layer][:b, :, :length, :]

    def advance(self, count: int) -> None:
        if self._filled + count > self.max_sequence:
            raise CacheOverflowError(
                f"advance past max sequence {self.max_sequence}"
            )
        self._filled += count


class ActivationCaches:
    """Two reusable hidden-state regions of b*p*h elements each.

    ``hidden`` carries the running hidden state shared by the embedding,
    feed-forward, and output stages; ``residual`` is held by the attention
    stage for its block output on the residual path.
    """

    def __init__(self, cfg: ModelConfig, log: AllocationLog | None = None):
        validate_config(cfg)
        b, p, h = cfg.batch_size, cfg.max_prompt, cfg.hidden_size
        self.config = cfg
        self.hidden = np.zeros((b, p, h), dtype=FLOAT)
        self.residual = np.zeros((b, p, h), dtype=FLOAT)
        if log is not None:
            log.record("preallocate", activation_elements(cfg), "malloc", "activation")

    def element_count(self) -> int:
        return self.hidden.size + self.residual.size

    def nbytes(self) -> int:
        return self.element_count() * FLOAT().itemsize


def preallocate_caches(
    cfg: ModelConfig, log: AllocationLog | None = None
) -> tuple[KVCache, ActivationCaches]:
    """Allocate the K/V and activation caches once, at their maximum size."""
    validate_config(cfg)
    kv = KVCache(cfg, log=log)
    acts = ActivationCaches(cfg, log=log)
    assert kv.element_count() == kv_cache_elements(cfg)
    assert acts.element_count() == activation_elements(cfg)
    return kv, acts
