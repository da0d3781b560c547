"""Power-of-two decomposition of oversized work rows.

A logical row of work (a hidden dimension or a key sequence) that exceeds the
per-unit parallelism cap is halved k times until each of the 2^k sub-blocks
fits under the cap. The plan records the decomposition; ``map_index`` maps
(sub_block, lane) coordinates back to logical indices, with a marker for the
tail positions of non-divisible sizes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import MAX_HIDDEN

DEFAULT_UNIT_CAP = 1024


@dataclass(frozen=True)
class FoldingPlan:
    logical_size: int
    fold_count: int
    sub_block_count: int
    threads_per_block: int
    unit_cap: int


def plan_folding(logical_size: int, unit_cap: int = DEFAULT_UNIT_CAP) -> FoldingPlan:
    """Split ``logical_size`` into the fewest power-of-two sub-blocks under the cap.

    Returns the minimal k >= 0 with ceil(logical_size / 2^k) <= unit_cap, so a
    size within the cap stays a single block and any larger size keeps at
    least unit_cap/2 lanes per sub-block.
    """
    if unit_cap < 1:
        raise ValueError(f"unit_cap must be >= 1, got {unit_cap}")
    if not 1 <= logical_size <= MAX_HIDDEN:
        raise ValueError(
            f"logical_size {logical_size} outside supported range [1, {MAX_HIDDEN}]"
        )
    k = 0
    while -(-logical_size >> k) > unit_cap:  # ceil(logical_size / 2^k)
        k += 1
    t = 1 << k
    n = -(-logical_size // t)
    return FoldingPlan(
        logical_size=logical_size,
        fold_count=k,
        sub_block_count=t,
        threads_per_block=n,
        unit_cap=unit_cap,
    )


def map_index(plan: FoldingPlan, sub_block: int, lane: int) -> int | None:
    """Logical index of one (sub_block, lane) coordinate, or None past the tail.

    Restricted to in-range outputs the map is a bijection onto
    [0, plan.logical_size).
    """
    if not 0 <= sub_block < plan.sub_block_count:
        raise ValueError(
            f"sub_block {sub_block} outside [0, {plan.sub_block_count})"
        )
    if not 0 <= lane < plan.threads_per_block:
        raise ValueError(f"lane {lane} outside [0, {plan.threads_per_block})")
    idx = sub_block * plan.threads_per_block + lane
    return idx if idx < plan.logical_size else None


def sub_block_indices(plan: FoldingPlan, sub_block: int) -> np.ndarray:
    """All in-range logical indices covered by one sub-block, in lane order."""
    if not 0 <= sub_block < plan.sub_block_count:
        raise ValueError(
            f"sub_block {sub_block} outside [0, {plan.sub_block_count})"
        )
    start = sub_block * plan.threads_per_block
    stop = min(start + plan.threads_per_block, plan.logical_size)
    return np.arange(start, stop)


def plan_ranges(plan: FoldingPlan, lo: int, hi: int) -> list[tuple[int, int]]:
    """Sub-block boundaries clipped to the window [lo, hi), in block order.

    Used to drive reductions block by block so results are deterministic for
    a fixed plan.
    """
    n = plan.threads_per_block
    out = []
    first = lo // n
    for sb in range(first, plan.sub_block_count):
        a = max(sb * n, lo)
        b = min((sb + 1) * n, hi)
        if a >= hi:
            break
        if a < b:
            out.append((a, b))
    return out
