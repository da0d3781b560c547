"""Shared oracle implementations and tiny-model helpers.

The oracles here deliberately do what the library avoids (build explicit
mask tensors, recompute attention densely) and share no code with the fused
path, so agreement between the two is a real check.
"""

import numpy as np

from maskfold import BatchDescriptor, ModelConfig


def oracle_masked_softmax(scores: np.ndarray, desc: BatchDescriptor,
                          causal: bool) -> np.ndarray:
    """Explicit-mask softmax: -inf at disallowed entries, row softmax,
    pad-query rows zeroed. scores: [batch*heads, S, S]; returns a new array."""
    bh, s, _ = scores.shape
    heads = bh // desc.batch
    out = np.zeros_like(scores)
    for b in range(desc.batch):
        pad = desc.padding_len[b]
        allowed = np.zeros((s, s), dtype=bool)
        for i in range(pad, s):
            hi = i + 1 if causal else s
            allowed[i, pad:hi] = True
        plane = scores[b * heads : (b + 1) * heads]
        masked = np.where(allowed, plane, np.float32(-np.inf))
        m = masked.max(axis=-1, keepdims=True)
        with np.errstate(invalid="ignore"):
            e = np.exp(masked - m)
        e = np.nan_to_num(e, nan=0.0)  # fully masked (pad-query) rows
        sums = e.sum(axis=-1, keepdims=True)
        out[b * heads : (b + 1) * heads] = e / np.where(sums > 0, sums, 1.0)
    return out


def oracle_mha(q: np.ndarray, k: np.ndarray, v: np.ndarray,
               desc: BatchDescriptor, head_count: int,
               causal: bool) -> np.ndarray:
    """Dense multi-head attention reference built on the explicit-mask oracle."""
    b, t, h = q.shape
    hd = h // head_count

    def heads_of(x):
        return x.reshape(b, t, head_count, hd).transpose(0, 2, 1, 3)

    qh, kh, vh = heads_of(q), heads_of(k), heads_of(v)
    scores = (qh @ kh.transpose(0, 1, 3, 2)) / np.float32(np.sqrt(hd))
    attn = oracle_masked_softmax(
        scores.reshape(b * head_count, t, t).astype(np.float32), desc, causal
    ).reshape(b, head_count, t, t)
    ctx = attn @ vh
    return ctx.transpose(0, 2, 1, 3).reshape(b, t, h)


def tiny_config(batch=2, hidden=8, layers=2, heads=2, max_prompt=8,
                max_sequence=16) -> ModelConfig:
    return ModelConfig(
        batch_size=batch,
        hidden_size=hidden,
        layer_count=layers,
        head_count=heads,
        max_prompt=max_prompt,
        max_sequence=max_sequence,
    )


def random_descriptor(rng, max_batch=4, max_seq=16) -> BatchDescriptor:
    """Arbitrary valid descriptor: any pads in [0, seq), not just max-length ones."""
    batch = int(rng.integers(1, max_batch + 1))
    seq = int(rng.integers(1, max_seq + 1))
    pads = tuple(int(rng.integers(0, seq)) for _ in range(batch))
    return BatchDescriptor(seq_len=seq, padding_len=pads, batch=batch)


def random_scores(rng, desc: BatchDescriptor, heads: int) -> np.ndarray:
    shape = (desc.batch * heads, desc.seq_len, desc.seq_len)
    return rng.normal(0.0, 3.0, size=shape).astype(np.float32)
