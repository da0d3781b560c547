"""Masked multi-head attention without mask tensors.

Causal and padding constraints are applied by comparing query/key indices
against each sequence's pad offset, so no mask matrix is ever built: each
valid query row is softmaxed over its valid key window in place and every
position outside the window is written as an exact zero. Query rows that are
themselves padding are written as all-zero rows.

Each (batch, head) score plane is an independent work item; row reductions
run block-by-block over a :class:`FoldingPlan` so results are deterministic
for a fixed plan.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import BatchDescriptor
from .folding import FoldingPlan, plan_folding, plan_ranges


@dataclass
class AttentionScores:
    """Score planes laid out [batch * head_count, query_len, key_len]."""

    data: np.ndarray
    batch: int
    head_count: int

    def __post_init__(self):
        if self.data.ndim != 3:
            raise ValueError(f"scores must be 3-d, got shape {self.data.shape}")
        if self.data.shape[0] != self.batch * self.head_count:
            raise ValueError(
                f"first dimension {self.data.shape[0]} != batch {self.batch} "
                f"x heads {self.head_count}"
            )


def _check_scores(scores: AttentionScores, desc: BatchDescriptor) -> None:
    if scores.batch != desc.batch:
        raise ValueError(
            f"scores batch {scores.batch} != descriptor batch {desc.batch}"
        )
    if scores.data.shape[1] != desc.seq_len or scores.data.shape[2] != desc.seq_len:
        raise ValueError(
            f"score planes {scores.data.shape[1:]} != "
            f"(seq_len, seq_len) = ({desc.seq_len}, {desc.seq_len})"
        )


def _window_softmax(rows: np.ndarray, ranges: list[tuple[int, int]]) -> None:
    """In-place softmax along the last axis of a stack of window rows.

    The row maximum is subtracted before exponentiation; the normalizer is
    accumulated block by block in ``ranges`` order (relative to the window).
    """
    m = rows.max(axis=-1, keepdims=True)
    np.exp(rows - m, out=rows)
    total = np.zeros(rows.shape[:-1] + (1,), dtype=rows.dtype)
    for a, b in ranges:
        total += rows[..., a:b].sum(axis=-1, keepdims=True)
    rows /= total


def _relative(ranges: list[tuple[int, int]], lo: int) -> list[tuple[int, int]]:
    return [(a - lo, b - lo) for a, b in ranges]


def fused_causal_softmax(
    scores: AttentionScores,
    desc: BatchDescriptor,
    plan: FoldingPlan | None = None,
) -> AttentionScores:
    """Causal + padding softmax over square score planes, in place.

    For every query row i >= padding_len[b] the softmax runs over key
    positions j in [padding_len[b], i]; everything outside that window is an
    exact zero, and pad query rows (i < padding_len[b]) come out all-zero.
    """
    _check_scores(scores, desc)
    s = desc.seq_len
    if plan is None:
        plan = plan_folding(s)
    elif plan.logical_size != s:
        raise ValueError(
            f"plan covers {plan.logical_size} keys, descriptor has {s}"
        )
    heads = scores.head_count
    a = scores.data
    for b in range(desc.batch):
        pad = desc.padding_len[b]
        plane = a[b * heads : (b + 1) * heads]
        plane[:, :pad, :] = 0.0
        for i in range(pad, s):
            row = plane[:, i, :]
            row[:, :pad] = 0.0
            row[:, i + 1 :] = 0.0
            win = row[:, pad : i + 1]
            _window_softmax(win, _relative(plan_ranges(plan, pad, i + 1), pad))
    return scores


def fused_padding_softmax(
    scores: AttentionScores,
    desc: BatchDescriptor,
    plan: FoldingPlan | None = None,
) -> AttentionScores:
    """Bidirectional padding softmax over square score planes, in place.

    Every valid query row is softmaxed over key positions
    [padding_len[b], seq_len); pad columns are exact zeros and pad query rows
    come out all-zero. Encoder semantics: no causal bound.
    """
    _check_scores(scores, desc)
    s = desc.seq_len
    if plan is None:
        plan = plan_folding(s)
    elif plan.logical_size != s:
        raise ValueError(
            f"plan covers {plan.logical_size} keys, descriptor has {s}"
        )
    heads = scores.head_count
    a = scores.data
    for b in range(desc.batch):
        pad = desc.padding_len[b]
        plane = a[b * heads : (b + 1) * heads]
        plane[:, :pad, :] = 0.0
        plane[:, pad:, :pad] = 0.0
        win = plane[:, pad:, pad:]
        _window_softmax(win, _relative(plan_ranges(plan, pad, s), pad))
    return scores


def fused_step_softmax(
    scores: np.ndarray,
    desc: BatchDescriptor,
    plan: FoldingPlan | None = None,
) -> np.ndarray:
    """Softmax for one decoding step: scores [batch, heads, key_len], in place.

    The single query of each sequence is a real token attending over all
    cached positions from its pad offset onward (causality is implicit: every
    cached key precedes the current position).
    """
    b, heads, length = scores.shape
    if b != desc.batch:
        raise ValueError(f"scores batch {b} != descriptor batch {desc.batch}")
    if plan is None:
        plan = plan_folding(length)
    elif plan.logical_size != length:
        raise ValueError(
            f"plan covers {plan.logical_size} keys, scores have {length}"
        )
    for i in range(b):
        pad = desc.padding_len[i]
        scores[i, :, :pad] = 0.0
        win = scores[i, :, pad:]
        _window_softmax(win, _relative(plan_ranges(plan, pad, length), pad))
    return scores


def split_heads(x: np.ndarray, head_count: int) -> np.ndarray:
    """[b, t, h] -> [b, heads, t, head_dim] view."""
    b, t, h = x.shape
    return x.reshape(b, t, head_count, h // head_count).transpose(0, 2, 1, 3)


def mha_forward(
    q: np.ndarray,
    k: np.ndarray,
    v: np.ndarray,
    desc: BatchDescriptor,
    head_count: int,
    causal: bool = True,
    plan: FoldingPlan | None = None,
) -> np.ndarray:
    """Scaled dot-product attention with index-comparison masking.

    q, k, v are [batch, seq_len, hidden]; the context tensor comes back in
    the same layout with pad-query rows zeroed. No mask tensor is built; the
    only seq^2-sized array is the score tensor itself. ``plan`` partitions the
    key-dimension reductions (defaults to the folding of seq_len).
    """
    if q.shape != k.shape or q.shape != v.shape:
        raise ValueError(f"q/k/v shapes differ: {q.shape} {k.shape} {v.shape}")
    b, t, h = q.shape
    if b != desc.batch or t != desc.seq_len:
        raise ValueError(
            f"inputs [{b}, {t}, ...] do not match descriptor "
            f"(batch {desc.batch}, seq_len {desc.seq_len})"
        )
    if h % head_count != 0:
        raise ValueError(f"hidden {h} not divisible by {head_count} heads")
    if plan is not None and plan.logical_size != t:
        raise ValueError(f"plan covers {plan.logical_size} keys, inputs have {t}")

    hd = h // head_count
    qh = split_heads(q, head_count)
    kh = split_heads(k, head_count)
    vh = split_heads(v, head_count)

    scores = np.matmul(qh, kh.transpose(0, 1, 3, 2)).reshape(b * head_count, t, t)
    scores *= np.float32(1.0 / math.sqrt(hd))
    attn = AttentionScores(scores, batch=b, head_count=head_count)
    if causal:
        fused_causal_softmax(attn, desc, plan=plan)
    else:
        fused_padding_softmax(attn, desc, plan=plan)

    weights = scores.reshape(b, head_count, t, t)
    out = np.empty((b, t, head_count, hd), dtype=q.dtype)
    np.einsum("bhqk,bhkd->bqhd", weights, vh, out=out)
    return out.reshape(b, t, h)
