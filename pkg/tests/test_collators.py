import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from packbench import (
    Pack,
    RunConfig,
    Segment,
    TokenSequence,
    build_plan,
    collate_plan,
    derive_cu_seqlens,
    pad_collate,
    packed_collate,
    padding_free_collate,
)

from conftest import (
    GOLDEN_CU_SEQLENS,
    GOLDEN_INPUT_IDS,
    GOLDEN_LABELS,
    GOLDEN_POSITION_IDS,
    make_dataset,
)


class TestPadCollate:
    def test_paper_examples_shape_and_row0(self, paper_examples):
        batch = pad_collate(paper_examples, pad_id=0)
        assert (batch.rows, batch.cols) == (4, 11)
        assert batch.input_ids[0] == (10, 11, 12, 13) + (0,) * 7
        assert batch.attention_mask[0] == (1, 1, 1, 1) + (0,) * 7
        assert batch.labels[0] == (-100, 11, 12, 13) + (-100,) * 7
        assert batch.position_ids is None

    def test_single_example_no_padding(self):
        batch = pad_collate(make_dataset([6]))
        assert (batch.rows, batch.cols) == (1, 6)
        assert all(v == 1 for v in batch.attention_mask[0])

    def test_equal_lengths_no_padding(self):
        batch = pad_collate(make_dataset([5, 5]))
        assert sum(sum(r) for r in batch.attention_mask) == batch.rows * batch.cols

    def test_padding_cell_count(self, paper_examples):
        batch = pad_collate(paper_examples)
        pad_cells = sum(1 for row in batch.attention_mask for v in row if v == 0)
        assert pad_cells == sum(11 - n for n in (4, 8, 5, 11))

    def test_custom_pad_id(self):
        batch = pad_collate(make_dataset([2, 4]), pad_id=777)
        assert batch.input_ids[0][2:] == (777, 777)

    def test_empty_batch_rejected(self):
        with pytest.raises(ValueError):
            pad_collate([])


class TestPaddingFreeCollate:
    def test_golden_fixture(self, paper_examples):
        batch = padding_free_collate(paper_examples)
        assert (batch.rows, batch.cols) == (1, 28)
        assert batch.input_ids[0] == GOLDEN_INPUT_IDS
        assert batch.labels[0] == GOLDEN_LABELS
        assert batch.position_ids[0] == GOLDEN_POSITION_IDS
        assert batch.attention_mask is None

    def test_single_example(self):
        batch = padding_free_collate([TokenSequence(0, (5, 6, 7))])
        assert batch.input_ids[0] == (5, 6, 7)
        assert batch.labels[0] == (-100, 6, 7)
        assert batch.position_ids[0] == (0, 1, 2)

    def test_length_one_examples(self):
        batch = padding_free_collate([TokenSequence(0, (1,)), TokenSequence(1, (2,))])
        assert batch.position_ids[0] == (0, 0)
        assert batch.labels[0] == (-100, -100)

    def test_no_padding_ever(self):
        batch = padding_free_collate(make_dataset([3, 1, 7]))
        assert batch.cols == 11

    def test_empty_batch_rejected(self):
        with pytest.raises(ValueError):
            padding_free_collate([])


class TestPackedCollate:
    def test_whole_segments_with_padding(self, paper_examples):
        pack = Pack((Segment(0, 0, 4), Segment(2, 0, 5)), capacity=16)
        batch = packed_collate(pack, paper_examples, with_position_ids=True)
        assert (batch.rows, batch.cols) == (1, 16)
        assert batch.position_ids[0] == tuple(range(4)) + tuple(range(5)) + (0,) * 7
        assert batch.input_ids[0][9:] == (0,) * 7
        assert batch.labels[0][9:] == (-100,) * 7
        assert batch.cu_seqlens == (0, 4, 9)

    def test_broken_segment_continues_positions(self, paper_examples):
        pack = Pack((Segment(3, 7, 11),), capacity=4)
        batch = packed_collate(pack, paper_examples, with_position_ids=True)
        assert batch.position_ids[0] == (7, 8, 9, 10)
        # Continuation segments keep real labels at their first token.
        assert batch.labels[0] == (47, 48, 49, 410)

    def test_head_segment_gets_ignore_label(self, paper_examples):
        pack = Pack((Segment(3, 0, 7),), capacity=7)
        batch = packed_collate(pack, paper_examples, with_position_ids=True)
        assert batch.labels[0][0] == -100

    def test_without_position_ids(self, paper_examples):
        pack = Pack((Segment(0, 0, 4), Segment(2, 0, 5)), capacity=9)
        batch = packed_collate(pack, paper_examples, with_position_ids=False)
        assert batch.position_ids is None
        assert batch.cu_seqlens is None

    def test_segment_out_of_range_rejected(self, paper_examples):
        pack = Pack((Segment(0, 0, 4), Segment(2, 0, 6)), capacity=16)
        with pytest.raises(ValueError):
            packed_collate(pack, paper_examples, with_position_ids=True)


class TestDeriveCuSeqlens:
    def test_paper_row(self):
        assert derive_cu_seqlens(GOLDEN_POSITION_IDS, 28) == GOLDEN_CU_SEQLENS

    def test_single_segment(self):
        assert derive_cu_seqlens([0, 1, 2], 3) == [0, 3]

    def test_three_singletons(self):
        assert derive_cu_seqlens([0, 0, 0], 3) == [0, 1, 2, 3]

    def test_accepts_nested_single_row(self):
        assert derive_cu_seqlens([[0, 1, 2]], 3) == [0, 3]

    def test_continuation_row(self):
        assert derive_cu_seqlens([4, 5, 6, 7, 0, 1, 2, 3], 8) == [0, 4, 8]

    def test_occupied_prefix_only(self):
        assert derive_cu_seqlens([0, 1, 2, 0, 0, 0], 3) == [0, 3]

    def test_garbage_jump_rejected(self):
        with pytest.raises(ValueError):
            derive_cu_seqlens([0, 1, 5], 3)

    def test_bad_occupied_rejected(self):
        with pytest.raises(ValueError):
            derive_cu_seqlens([0, 1], 3)


class TestContracts:
    @given(
        lengths=st.lists(st.integers(1, 20), min_size=1, max_size=10),
    )
    @settings(max_examples=60, deadline=None)
    def test_cu_round_trip_matches_lengths(self, lengths):
        batch = padding_free_collate(make_dataset(lengths))
        cu = derive_cu_seqlens(batch.position_ids[0], batch.cols)
        assert [b - a for a, b in zip(cu, cu[1:])] == lengths

    @given(
        lengths=st.lists(st.integers(1, 20), min_size=1, max_size=10),
    )
    @settings(max_examples=60, deadline=None)
    def test_ignore_label_counts_segment_starts(self, lengths):
        ds = make_dataset(lengths, start_token=1)  # keep 0 free for padding
        batch = padding_free_collate(ds)
        assert batch.labels[0].count(-100) == len(lengths)

    @given(
        lengths=st.lists(st.integers(1, 24), min_size=1, max_size=12),
        capacity=st.integers(2, 40),
    )
    @settings(max_examples=60, deadline=None)
    def test_broken_rows_round_trip_through_positions(self, lengths, capacity):
        # Fixed-length rows, including broken segments, must re-derive their
        # own segment offsets from the position row alone.
        from packbench import fixed_length_pack

        ds = make_dataset(lengths)
        packs = fixed_length_pack(list(range(len(ds))), ds, capacity)
        for pack in packs:
            batch = packed_collate(pack, ds, with_position_ids=True)
            derived = derive_cu_seqlens(batch.position_ids[0], batch.cu_seqlens[-1])
            assert derived == list(batch.cu_seqlens)

    def test_cu_reconstructs_examples(self, paper_examples):
        pack = Pack(
            (Segment(1, 0, 8), Segment(0, 0, 4), Segment(2, 0, 5)), capacity=20
        )
        batch = packed_collate(pack, paper_examples, with_position_ids=True)
        cu = derive_cu_seqlens(batch.position_ids[0], batch.cu_seqlens[-1])
        pieces = [batch.input_ids[0][a:b] for a, b in zip(cu, cu[1:])]
        assert pieces == [
            paper_examples[1].tokens,
            paper_examples[0].tokens,
            paper_examples[2].tokens,
        ]


class TestCollatePlan:
    def test_minibatch_plan_order(self, paper_examples):
        cfg = RunConfig("MiniBatchPacking+PosID", bs=2, msl=16, gas=1, world=1, seed=0)
        plan = build_plan(paper_examples, cfg)
        batches = list(collate_plan(plan, paper_examples))
        assert len(batches) == 2
        assert all(b.rows == 1 and b.position_ids is not None for b in batches)

    def test_fixed_length_last_row_short(self, paper_examples):
        # 28 tokens at row capacity 12: two full rows, one short row of 4.
        cfg = RunConfig("FixedLengthPacking", bs=1, msl=12, gas=1, world=1, seed=0)
        plan = build_plan(paper_examples, cfg)
        batches = list(collate_plan(plan, paper_examples))
        assert [b.cols for b in batches] == [12, 12, 4]
        assert all(b.position_ids is None for b in batches)

    def test_retruncates_with_plan_msl(self):
        ds = make_dataset([30, 4])
        cfg = RunConfig("SortedPacking+PosID", bs=1, msl=8, gas=1, world=1, seed=0)
        plan = build_plan(ds, cfg)
        batches = list(collate_plan(plan, ds))
        assert all(b.cols == 8 for b in batches)
