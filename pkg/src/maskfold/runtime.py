"""Decoder/encoder layers and the two-phase generation loop.

Generation runs in two phases: one parallel pass ingests all prompt tokens at
once, writing their key/value projections into the preallocated caches, then
incremental steps process one token per sequence against the cached history.
Uneven batches are left-padded to the longest prompt (max-length strategy),
so every sequence's live token sits at the last slot and the whole batch
decodes in lockstep.

Layers are pre-norm. All operator scratch comes from the buffer pool; the
running hidden state lives in the activation cache regions, so the decoding
loop allocates nothing after the caches are preallocated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .attention import (
    AttentionScores,
    fused_causal_softmax,
    fused_padding_softmax,
    fused_step_softmax,
    split_heads,
)
from .core import FLOAT, BatchDescriptor, ModelConfig, make_batch, validate_config
from .memory import (
    SCOPE_ACROSS,
    SCOPE_WITHIN,
    ActivationCaches,
    AllocationLog,
    BufferPool,
    CacheOverflowError,
    KVCache,
    preallocate_caches,
)
from .weights import LayerWeights, ModelWeights

LN_EPS = np.float32(1e-5)
_GELU_C = np.float32(math.sqrt(2.0 / math.pi))
_GELU_A = np.float32(0.044715)


class Phase(Enum):
    PROMPT_PARALLEL = "prompt_parallel"
    INCREMENTAL = "incremental"


@dataclass
class GenerationRequest:
    """Greedy generation of ``steps`` tokens given per-sequence prompts."""

    prompts: list[list[int]]
    steps: int
    strategy: str = "greedy"

    def __post_init__(self):
        if self.strategy != "greedy":
            raise ValueError(f"unsupported strategy {self.strategy!r}")
        if not self.prompts:
            raise ValueError("request needs at least one prompt")
        if any(len(p) < 1 for p in self.prompts):
            raise ValueError("every prompt must have at least one token")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")


@dataclass
class RunTrace:
    """Work counters (and optionally per-step logits) collected during a run."""

    layer_invocations: int = 0
    prompt_passes: int = 0
    decode_steps: int = 0
    collect_logits: bool = False
    step_logits: list[np.ndarray] = field(default_factory=list)


def layer_norm(
    x: np.ndarray, scale: np.ndarray, shift: np.ndarray, out: np.ndarray | None = None
) -> np.ndarray:
    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    if out is None:
        out = np.empty_like(x)
    np.subtract(x, mean, out=out)
    out /= np.sqrt(var + LN_EPS)
    out *= scale
    out += shift
    return out


def gelu_(x: np.ndarray) -> np.ndarray:
    """Tanh-approximation GELU, in place."""
    inner = np.tanh(_GELU_C * (x + _GELU_A * x * x * x))
    inner += np.float32(1.0)
    inner *= np.float32(0.5)
    x *= inner
    return x


def _attention_block(
    x: np.ndarray,
    w: LayerWeights,
    desc: BatchDescriptor,
    pool: BufferPool,
    res: np.ndarray,
    scope: str,
    *,
    kv: KVCache | None,
    layer_idx: int,
    phase: Phase,
    head_count: int,
) -> None:
    """Self-attention block output (ln -> qkv -> fused attention -> proj) into ``res``."""
    b, t, h = x.shape
    heads = head_count
    hd = h // heads
    inv_scale = np.float32(1.0 / math.sqrt(hd))

    ln_h = pool.request(b * t * h, scope=scope, tag="attention.layernorm")
    ln1 = ln_h.view((b, t, h))
    layer_norm(x, w.ln1_scale, w.ln1_shift, out=ln1)

    q_h = pool.request(b * t * h, scope=scope, tag="attention.query")
    q = q_h.view((b, t, h))
    np.matmul(ln1, w.wq, out=q)

    if kv is not None:
        # Decoder: key/value projections go straight into the cache slots.
        start = kv.filled
        kv.write(layer_idx, start, ln1 @ w.wk, ln1 @ w.wv)
        length = start + t
        kh = kv.keys(layer_idx, length, batch=b)
        vh = kv.values(layer_idx, length, batch=b)
        k_h = v_h = None
    else:
        # Encoder: no cache; key/value live in pooled buffers.
        k_h = pool.request(b * t * h, scope=scope, tag="attention.key")
        v_h = pool.request(b * t * h, scope=scope, tag="attention.value")
        k = k_h.view((b, t, h))
        v = v_h.view((b, t, h))
        np.matmul(ln1, w.wk, out=k)
        np.matmul(ln1, w.wv, out=v)
        length = t
        kh = split_heads(k, heads)
        vh = split_heads(v, heads)
    ln_h.release()

    qh = split_heads(q, heads)
    if phase is Phase.INCREMENTAL:
        # Stable request size across steps: capacity for the longest history.
        assert kv is not None
        sc_h = pool.request(b * heads * kv.max_sequence, scope=scope, tag="attention.scores")
        scores = sc_h.view((b, heads, 1, length))
        np.matmul(qh, kh.transpose(0, 1, 3, 2), out=scores)
        scores *= inv_scale
        fused_step_softmax(scores.reshape(b, heads, length), desc)
        weights = scores
    else:
        sc_h = pool.request(b * heads * t * t, scope=scope, tag="attention.scores")
        scores = sc_h.view((b * heads, t, t))
        np.matmul(qh, kh.transpose(0, 1, 3, 2), out=scores.reshape(b, heads, t, t))
        scores *= inv_scale
        planes = AttentionScores(scores, batch=b, head_count=heads)
        if kv is not None:
            fused_causal_softmax(planes, desc)
        else:
            fused_padding_softmax(planes, desc)
        weights = scores.reshape(b, heads, t, t)

    ctx_h = pool.request(b * t * h, scope=scope, tag="attention.context")
    ctx = ctx_h.view((b, t, h))
    np.einsum("bhqk,bhkd->bqhd", weights, vh, out=ctx.reshape(b, t, heads, hd))
    sc_h.release()
    q_h.release()
    if k_h is not None:
        k_h.release()
    if v_h is not None:
        v_h.release()

    # Pad-query rows of the weights are all-zero, so their context and
    # projection rows are exact zeros too.
    np.matmul(ctx, w.wo, out=res)
    ctx_h.release()


def _feed_forward_block(
    x: np.ndarray, w: LayerWeights, pool: BufferPool, scope: str
) -> None:
    """x += W2 @ gelu(W1 @ ln(x)), accumulated in two half-width chunks.

    Chunking halves the live intermediate to b*t*2h, which is what keeps a
    full layer trace under the pooled-buffer bound; the result is the same
    sum, accumulated chunk by chunk.
    """
    b, t, h = x.shape
    ln_h = pool.request(b * t * h, scope=SCOPE_ACROSS, tag="ffn.layernorm")
    ln2 = ln_h.view((b, t, h))
    layer_norm(x, w.ln2_scale, w.ln2_shift, out=ln2)

    half = 2 * h
    mid_h = pool.request(b * t * half, scope=SCOPE_ACROSS, tag="ffn.intermediate")
    mid = mid_h.view((b, t, half))
    for c0 in (0, half):
        np.matmul(ln2, w.w1[:, c0 : c0 + half], out=mid)
        gelu_(mid)
        x += mid @ w.w2[c0 : c0 + half, :]
    mid_h.release()
    ln_h.release()


def decoder_layer_forward(
    x: np.ndarray,
    w: LayerWeights,
    kv: KVCache,
    desc: BatchDescriptor,
    phase: Phase,
    pool: BufferPool,
    acts: ActivationCaches,
    layer_idx: int,
    trace: RunTrace | None = None,
) -> np.ndarray:
    """One pre-norm decoder layer step, in place on ``x``.

    PromptParallel writes K/V for all prompt slots into the cache and attends
    causally within the prompt; Incremental appends exactly one position and
    attends over everything cached so far. The cache cursor is advanced by
    the caller once all layers have processed the step.
    """
    b, t, h = x.shape
    if phase is Phase.INCREMENTAL:
        if t != 1:
            raise ValueError(f"incremental step takes 1 token, got {t}")
        if kv.filled < desc.seq_len:
            raise ValueError("incremental phase before the prompt was cached")
    else:
        if t != desc.seq_len:
            raise ValueError(
                f"prompt pass covers {desc.seq_len} slots, got {t}"
            )
        if kv.filled != 0:
            raise ValueError("prompt phase expects an empty cache")
    if kv.filled + t > kv.max_sequence:
        raise CacheOverflowError(
            f"step would fill {kv.filled + t} of {kv.max_sequence} cache slots"
        )

    scope = SCOPE_WITHIN if phase is Phase.PROMPT_PARALLEL else SCOPE_ACROSS
    res = acts.residual[:b, :t]
    _attention_block(
        x, w, desc, pool, res, scope,
        kv=kv, layer_idx=layer_idx, phase=phase, head_count=kv.head_count,
    )
    x += res
    _feed_forward_block(x, w, pool, scope)
    if trace is not None:
        trace.layer_invocations += 1
    return x


def encoder_layer_forward(
    x: np.ndarray,
    w: LayerWeights,
    desc: BatchDescriptor,
    pool: BufferPool,
    head_count: int,
    acts: ActivationCaches | None = None,
    trace: RunTrace | None = None,
) -> np.ndarray:
    """One pre-norm bidirectional layer, in place on ``x``.

    Pad positions are excluded from attention by index comparison, so they
    contribute nothing to any valid position's output.
    """
    b, t, h = x.shape
    if b != desc.batch or t != desc.seq_len:
        raise ValueError(
            f"input [{b}, {t}, ...] does not match descriptor "
            f"(batch {desc.batch}, seq_len {desc.seq_len})"
        )
    if h % head_count != 0:
        raise ValueError(f"hidden {h} not divisible by {head_count} heads")

    if acts is not None:
        res = acts.residual[:b, :t]
    else:
        res = np.empty((b, t, h), dtype=FLOAT)
    _attention_block(
        x, w, desc, pool, res, SCOPE_WITHIN,
        kv=None, layer_idx=0, phase=Phase.PROMPT_PARALLEL, head_count=head_count,
    )
    x += res
    _feed_forward_block(x, w, pool, SCOPE_WITHIN)
    if trace is not None:
        trace.layer_invocations += 1
    return x


def embed_prompt(
    weights: ModelWeights,
    prompts: list[list[int]],
    desc: BatchDescriptor,
    out: np.ndarray,
) -> np.ndarray:
    """Token + logical-position embeddings into the left-padded layout.

    Pad slots are zero-filled. Position ids count from each sequence's first
    real token (slot - pad), so a padded run embeds every real token exactly
    as an unpadded run of that sequence alone would.
    """
    out[:] = 0.0
    for i, ids in enumerate(prompts):
        pad = desc.padding_len[i]
        n = len(ids)
        out[i, pad : pad + n] = (
            weights.token_embedding[ids] + weights.position_embedding[:n]
        )
    return out


def embed_step(
    weights: ModelWeights,
    token_ids: np.ndarray,
    desc: BatchDescriptor,
    slot: int,
    out: np.ndarray,
) -> np.ndarray:
    """Embeddings for one generated token per sequence at absolute ``slot``."""
    positions = slot - np.asarray(desc.padding_len)
    out[:, 0] = (
        weights.token_embedding[token_ids] + weights.position_embedding[positions]
    )
    return out


def head_logits(weights: ModelWeights, hidden: np.ndarray) -> np.ndarray:
    """Final layer norm + output projection for [batch, hidden] states."""
    normed = layer_norm(hidden, weights.final_scale, weights.final_shift)
    return normed @ weights.output_head


def _validate_request(
    weights: ModelWeights, req: GenerationRequest, cfg: ModelConfig
) -> None:
    validate_config(cfg)
    if weights.hidden_size != cfg.hidden_size or weights.layer_count != cfg.layer_count:
        raise ValueError("weights do not match the configuration")
    if len(req.prompts) > cfg.batch_size:
        raise ValueError(
            f"batch {len(req.prompts)} exceeds configured maximum {cfg.batch_size}"
        )
    longest = max(len(p) for p in req.prompts)
    if longest > cfg.max_prompt:
        raise ValueError(f"prompt length {longest} exceeds max prompt {cfg.max_prompt}")
    if longest + req.steps > cfg.max_sequence:
        raise ValueError(
            f"prompt {longest} + steps {req.steps} exceeds max sequence "
            f"{cfg.max_sequence}"
        )
    vocab = weights.vocab
    for ids in req.prompts:
        for tok in ids:
            if not 0 <= tok < vocab:
                raise ValueError(f"token id {tok} outside vocab [0, {vocab})")


def generate(
    weights: ModelWeights,
    req: GenerationRequest,
    cfg: ModelConfig,
    *,
    pool: BufferPool | None = None,
    log: AllocationLog | None = None,
    trace: RunTrace | None = None,
    caches: tuple[KVCache, ActivationCaches] | None = None,
) -> np.ndarray:
    """Greedy decoding: one prompt-parallel pass, then ``req.steps`` incremental steps.

    Returns the generated token ids as an int64 [batch, steps] matrix.
    Deterministic for fixed weights; argmax ties break toward the lowest
    token id. Pass preallocated ``caches`` to inspect them afterwards; they
    must be empty and built for the same configuration.
    """
    _validate_request(weights, req, cfg)
    if log is None:
        log = AllocationLog()
    if pool is None:
        pool = BufferPool(log=log)
    if caches is None:
        kv, acts = preallocate_caches(cfg, log=log)
    else:
        kv, acts = caches
        if kv.config != cfg or acts.config != cfg:
            raise ValueError("injected caches were built for another configuration")
        if kv.filled != 0:
            raise ValueError("injected K/V cache is not empty")

    nb = len(req.prompts)
    desc = make_batch([len(p) for p in req.prompts])
    t = desc.seq_len

    x = acts.hidden[:nb, :t]
    embed_prompt(weights, req.prompts, desc, out=x)
    for li, lw in enumerate(weights.layers):
        decoder_layer_forward(
            x, lw, kv, desc, Phase.PROMPT_PARALLEL, pool, acts, li, trace=trace
        )
    kv.advance(t)
    if trace is not None:
        trace.prompt_passes += 1

    tokens = np.zeros((nb, req.steps), dtype=np.int64)
    if req.steps == 0:
        return tokens

    logits = head_logits(weights, x[:, -1, :])
    for s in range(req.steps):
        if trace is not None and trace.collect_logits:
            trace.step_logits.append(logits.copy())
        nxt = np.argmax(logits, axis=1)
        tokens[:, s] = nxt
        x1 = acts.hidden[:nb, :1]
        embed_step(weights, nxt, desc, slot=t + s, out=x1)
        for li, lw in enumerate(weights.layers):
            decoder_layer_forward(
                x1, lw, kv, desc, Phase.INCREMENTAL, pool, acts, li, trace=trace
            )
        kv.advance(1)
        if trace is not None:
            trace.decode_steps += 1
        logits = head_logits(weights, x1[:, 0, :])
    return tokens
