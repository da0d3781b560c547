"""Naive explicit-mask path: correctness oracle and timing baseline.

This implementation does everything the optimized runtime avoids: it
materializes an additive -inf mask tensor for every forward pass, allocates
fresh scratch arrays every step, keeps no key/value cache, and processes the
prompt token by token - one full recompute over the growing prefix per
token. Generated tokens must match the optimized path exactly under greedy
decoding; wall time and allocation counts are what the benchmark compares.
"""

from __future__ import annotations

import math

import numpy as np

from .core import FLOAT, BatchDescriptor, ModelConfig, make_batch
from .memory import AllocationLog
from .runtime import (
    GenerationRequest,
    RunTrace,
    gelu_,
    head_logits,
    layer_norm,
    _validate_request,
)
from .weights import LayerWeights, ModelWeights


def explicit_mask(
    desc: BatchDescriptor,
    length: int,
    causal: bool,
    log: AllocationLog | None = None,
) -> np.ndarray:
    """Additive mask tensor [batch, 1, length, length]: 0 where attention is
    allowed, -inf elsewhere. Allocated fresh on every call, by design."""
    mask = np.zeros((desc.batch, 1, length, length), dtype=FLOAT)
    for b in range(desc.batch):
        pad = min(desc.padding_len[b], length)
        mask[b, 0, :, :pad] = -np.inf  # pad key columns
        mask[b, 0, :pad, :] = -np.inf  # pad query rows
    if causal:
        cols = np.arange(length)
        upper = cols[None, :] > cols[:, None]
        mask[:, 0, upper] = -np.inf
    if log is not None:
        log.record("allocate", mask.size, "malloc", "reference.mask")
    return mask


def masked_softmax(scores: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Row softmax of scores + mask; fully masked (pad-query) rows become zero."""
    a = scores + mask
    m = np.max(a, axis=-1, keepdims=True)
    m = np.where(np.isfinite(m), m, FLOAT(0.0))
    e = np.exp(a - m)
    s = e.sum(axis=-1, keepdims=True)
    return e / np.where(s == 0.0, FLOAT(1.0), s)


def reference_layer_forward(
    x: np.ndarray,
    w: LayerWeights,
    head_count: int,
    mask: np.ndarray,
    log: AllocationLog | None = None,
) -> np.ndarray:
    """Textbook pre-norm layer with explicit-mask attention; allocates freely."""
    b, t, h = x.shape
    hd = h // head_count

    ln1 = layer_norm(x, w.ln1_scale, w.ln1_shift)
    q = (ln1 @ w.wq).reshape(b, t, head_count, hd).transpose(0, 2, 1, 3)
    k = (ln1 @ w.wk).reshape(b, t, head_count, hd).transpose(0, 2, 1, 3)
    v = (ln1 @ w.wv).reshape(b, t, head_count, hd).transpose(0, 2, 1, 3)

    scores = np.matmul(q, k.transpose(0, 1, 3, 2)) * FLOAT(1.0 / math.sqrt(hd))
    if log is not None:
        log.record("allocate", scores.size, "malloc", "reference.scores")
    attn = masked_softmax(scores, mask)
    ctx = np.matmul(attn, v).transpose(0, 2, 1, 3).reshape(b, t, h)
    x = x + ctx @ w.wo

    ln2 = layer_norm(x, w.ln2_scale, w.ln2_shift)
    x = x + gelu_(ln2 @ w.w1) @ w.w2
    return x


def _embed_slots(
    weights: ModelWeights,
    ids: np.ndarray,
    desc: BatchDescriptor,
    length: int,
) -> np.ndarray:
    """Embeddings for slots [0, length); pad slots zero, positions logical."""
    b = desc.batch
    x = np.zeros((b, length, weights.hidden_size), dtype=FLOAT)
    for i in range(b):
        pad = desc.padding_len[i]
        if length <= pad:
            continue
        n = length - pad
        x[i, pad:length] = (
            weights.token_embedding[ids[i, pad:length]]
            + weights.position_embedding[:n]
        )
    return x


def _forward_pass(
    weights: ModelWeights,
    ids: np.ndarray,
    desc: BatchDescriptor,
    length: int,
    log: AllocationLog | None,
    trace: RunTrace | None,
) -> np.ndarray:
    """Full recompute over slots [0, length); returns last-slot logits."""
    x = _embed_slots(weights, ids, desc, length)
    mask = explicit_mask(desc, length, causal=True, log=log)
    for lw in weights.layers:
        x = reference_layer_forward(x, lw, weights.head_count, mask, log=log)
        if trace is not None:
            trace.layer_invocations += 1
    return head_logits(weights, x[:, -1, :])


def reference_generate(
    weights: ModelWeights,
    req: GenerationRequest,
    cfg: ModelConfig,
    *,
    log: AllocationLog | None = None,
    trace: RunTrace | None = None,
) -> np.ndarray:
    """Greedy decoding with token-by-token prompt ingestion and no caches.

    The prompt costs one full forward per prompt slot (sequential passes over
    growing prefixes); each generated token costs another full forward over
    everything so far. Token output is identical to :func:`runtime.generate`.
    """
    _validate_request(weights, req, cfg)
    nb = len(req.prompts)
    desc = make_batch([len(p) for p in req.prompts])
    t = desc.seq_len

    ids = np.zeros((nb, t + req.steps), dtype=np.int64)
    for i, prompt in enumerate(req.prompts):
        ids[i, desc.padding_len[i] : t] = prompt

    logits = None
    for prefix in range(1, t + 1):
        logits = _forward_pass(weights, ids, desc, prefix, log, trace)
        if trace is not None:
            trace.prompt_passes += 1

    tokens = np.zeros((nb, req.steps), dtype=np.int64)
    for s in range(req.steps):
        if trace is not None and trace.collect_logits:
            trace.step_logits.append(logits.copy())
        nxt = np.argmax(logits, axis=1)
        tokens[:, s] = nxt
        ids[:, t + s] = nxt
        logits = _forward_pass(weights, ids, desc, t + s + 1, log, trace)
        if trace is not None:
            trace.decode_steps += 1
    return tokens
