import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from maskfold import map_index, plan_folding, sub_block_indices
from maskfold.folding import plan_ranges


class TestPlanFolding:
    def test_worked_example_1280(self):
        # one fold: two sub-blocks of 640 lanes each
        plan = plan_folding(1280)
        assert plan.fold_count == 1
        assert plan.sub_block_count == 2
        assert plan.threads_per_block == 640

    def test_fits_without_folding(self):
        plan = plan_folding(1024)
        assert (plan.sub_block_count, plan.threads_per_block) == (1, 1024)

    def test_12288(self):
        plan = plan_folding(12288)
        assert (plan.sub_block_count, plan.threads_per_block) == (16, 768)

    def test_single_element(self):
        plan = plan_folding(1)
        assert (plan.sub_block_count, plan.threads_per_block) == (1, 1)

    def test_max_size_ok(self):
        plan = plan_folding(16384)
        assert plan.threads_per_block <= 1024

    @pytest.mark.parametrize("size", [0, -3, 16385])
    def test_out_of_range_rejected(self, size):
        with pytest.raises(ValueError, match="supported range"):
            plan_folding(size)

    def test_bad_cap_rejected(self):
        with pytest.raises(ValueError):
            plan_folding(64, unit_cap=0)

    @given(st.integers(1, 16384), st.integers(1, 2048))
    def test_plan_invariants(self, size, cap):
        plan = plan_folding(size, unit_cap=cap)
        t, n = plan.sub_block_count, plan.threads_per_block
        assert t == 2 ** plan.fold_count
        assert n <= cap
        assert t * n >= size
        # minimality: one fewer fold would overflow the cap
        if plan.fold_count > 0:
            assert -(-size // 2 ** (plan.fold_count - 1)) > cap

    @given(st.integers(1025, 16384))
    def test_at_least_half_cap_above_cap(self, size):
        plan = plan_folding(size)
        assert plan.threads_per_block >= 512

    @given(st.integers(1, 1024))
    def test_no_folding_at_or_below_cap(self, size):
        plan = plan_folding(size)
        assert (plan.sub_block_count, plan.threads_per_block) == (1, size)


def enumerate_coverage(plan):
    """All in-range logical indices reached by map_index, one scalar call each."""
    hits = []
    for sb in range(plan.sub_block_count):
        for lane in range(plan.threads_per_block):
            idx = map_index(plan, sb, lane)
            if idx is not None:
                hits.append(idx)
    return hits


class TestMapIndex:
    def test_identity_when_unfolded(self):
        plan = plan_folding(1024)
        assert map_index(plan, 0, 1023) == 1023

    def test_second_block_offset(self):
        plan = plan_folding(1280)
        assert map_index(plan, 1, 0) == 640

    def test_1030_exact_split(self):
        # 1030 = 2 * 515: no tail, last coordinate lands on 1029
        plan = plan_folding(1030)
        assert (plan.sub_block_count, plan.threads_per_block) == (2, 515)
        assert map_index(plan, 1, 514) == 1029
        hits = enumerate_coverage(plan)
        assert sorted(hits) == list(range(1030))

    def test_tail_marker(self):
        plan = plan_folding(5, unit_cap=4)
        assert (plan.sub_block_count, plan.threads_per_block) == (2, 3)
        assert map_index(plan, 1, 1) == 4
        assert map_index(plan, 1, 2) is None

    def test_coordinates_outside_plan_rejected(self):
        plan = plan_folding(1280)
        with pytest.raises(ValueError):
            map_index(plan, 2, 0)
        with pytest.raises(ValueError):
            map_index(plan, 0, 640)
        with pytest.raises(ValueError):
            map_index(plan, -1, 0)

    @pytest.mark.parametrize("size", range(1, 65))
    def test_bijection_small_cap(self, size):
        plan = plan_folding(size, unit_cap=4)
        assert sorted(enumerate_coverage(plan)) == list(range(size))

    @settings(max_examples=200)
    @given(st.integers(1, 4096), st.integers(1, 64))
    def test_bijection_random(self, size, cap):
        plan = plan_folding(size, unit_cap=cap)
        covered = np.concatenate(
            [sub_block_indices(plan, sb) for sb in range(plan.sub_block_count)]
        )
        assert np.array_equal(np.sort(covered), np.arange(size))

    @given(st.integers(1, 2048), st.integers(1, 128))
    def test_sub_block_indices_agree_with_map_index(self, size, cap):
        plan = plan_folding(size, unit_cap=cap)
        sb = plan.sub_block_count - 1  # the only block that can have a tail
        via_scalar = [
            idx
            for lane in range(plan.threads_per_block)
            if (idx := map_index(plan, sb, lane)) is not None
        ]
        assert sub_block_indices(plan, sb).tolist() == via_scalar


class TestPlanRanges:
    def test_single_block(self):
        plan = plan_folding(16)
        assert plan_ranges(plan, 3, 11) == [(3, 11)]

    def test_window_split_at_block_boundaries(self):
        plan = plan_folding(16, unit_cap=4)  # blocks of 4
        assert plan_ranges(plan, 3, 11) == [(3, 4), (4, 8), (8, 11)]

    def test_empty_window(self):
        plan = plan_folding(16, unit_cap=4)
        assert plan_ranges(plan, 5, 5) == []

    @given(st.integers(1, 256), st.integers(1, 32), st.data())
    def test_ranges_tile_window(self, size, cap, data):
        plan = plan_folding(size, unit_cap=cap)
        lo = data.draw(st.integers(0, size - 1))
        hi = data.draw(st.integers(lo, size))
        ranges = plan_ranges(plan, lo, hi)
        flat = [i for a, b in ranges for i in range(a, b)]
        assert flat == list(range(lo, hi))
