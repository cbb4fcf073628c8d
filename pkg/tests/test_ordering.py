import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from packbench import group_by_length_order, random_order, sorted_order

from conftest import make_dataset


class TestRandomOrder:
    def test_singleton(self):
        assert random_order(make_dataset([3]), seed=0) == [0]

    def test_deterministic(self):
        ds = make_dataset([2, 5, 1, 9, 4])
        assert random_order(ds, seed=11) == random_order(ds, seed=11)

    @given(
        lengths=st.lists(st.integers(1, 50), min_size=1, max_size=40),
        seed=st.integers(0, 2**31),
    )
    @settings(max_examples=80, deadline=None)
    def test_is_permutation(self, lengths, seed):
        ds = make_dataset(lengths)
        assert sorted(random_order(ds, seed)) == [ex.id for ex in ds]

    def test_slot_uniformity(self):
        # Chi-squared style sanity check: over many seeds each element lands
        # in each slot about n_seeds / n times, within 5 sigma.
        ds = make_dataset([1, 2, 3, 4, 5])
        n_seeds = 10000
        counts = np.zeros((5, 5), dtype=int)
        for seed in range(n_seeds):
            for slot, eid in enumerate(random_order(ds, seed)):
                counts[eid, slot] += 1
        expected = n_seeds / 5
        sigma = np.sqrt(n_seeds * 0.2 * 0.8)
        assert np.abs(counts - expected).max() <= 5 * sigma


class TestSortedOrder:
    def test_paper_lengths(self):
        assert sorted_order(make_dataset([4, 8, 5, 11])) == [3, 1, 2, 0]

    def test_equal_lengths_identity(self):
        assert sorted_order(make_dataset([6] * 5)) == [0, 1, 2, 3, 4]

    def test_already_descending_identity(self):
        assert sorted_order(make_dataset([9, 7, 5, 3])) == [0, 1, 2, 3]


class TestGroupByLengthOrder:
    def test_single_window_equals_sorted(self):
        ds = make_dataset([2, 9, 4, 4, 7])
        assert group_by_length_order(ds, megabatch=100, seed=3) == sorted_order(ds)

    def test_windows_internally_non_increasing(self):
        ds = make_dataset(list(range(1, 9)))
        order = group_by_length_order(ds, megabatch=4, seed=5)
        by_id = {ex.id: ex.length for ex in ds}
        for half in (order[:4], order[4:]):
            lengths = [by_id[i] for i in half]
            assert lengths == sorted(lengths, reverse=True)

    def test_longest_window_moved_to_front(self):
        ds = make_dataset([1, 2, 3, 4, 5, 6, 7, 99])
        order = group_by_length_order(ds, megabatch=2, seed=1)
        assert 7 in order[:2]

    def test_window_of_one_is_shuffle_with_longest_first(self):
        # Sorting singleton windows is the identity, but the window holding
        # the longest example still moves to the front.
        ds = make_dataset([3, 1, 4, 1, 5])
        shuffled = random_order(ds, seed=8)
        expected = [4] + [i for i in shuffled if i != 4]
        assert group_by_length_order(ds, megabatch=1, seed=8) == expected

    @given(
        lengths=st.lists(st.integers(1, 30), min_size=1, max_size=30),
        megabatch=st.integers(1, 12),
        seed=st.integers(0, 1000),
    )
    @settings(max_examples=80, deadline=None)
    def test_is_permutation(self, lengths, megabatch, seed):
        ds = make_dataset(lengths)
        assert sorted(group_by_length_order(ds, megabatch, seed)) == [
            ex.id for ex in ds
        ]

    def test_rejects_bad_window(self):
        with pytest.raises(ValueError):
            group_by_length_order(make_dataset([1]), megabatch=0, seed=0)
