"""Collators: materialize batch tensors from examples and packs.

Three collation shapes cover all eight methods: dynamically padded
rectangular batches, a single padding-free row with per-example position
IDs, and packed rows built from pack segments. Position IDs restart at 0
at every example start, which is what downstream variable-length attention
consumes (via cu_seqlens derived here).

All collators are stateless pure functions; the label convention is the
same everywhere: the label at every example start becomes -100, and padding
cells carry -100.
"""

from __future__ import annotations

from typing import Iterator, Mapping, Sequence

from .core import (
    DEFAULT_PAD_ID,
    IGNORE_LABEL,
    ONLINE_METHODS,
    POSITION_ID_METHODS,
    CollatedBatch,
    Pack,
    TokenSequence,
    dataset_by_id,
)
from .packing import ExampleBatch, PackingPlan, truncate_dataset


def _lookup(by_id: Mapping[int, TokenSequence], eid: int) -> TokenSequence:
    ex = by_id.get(eid)
    if ex is None:
        raise ValueError(f"plan references unknown example id {eid}")
    return ex


def pad_collate(
    examples: Sequence[TokenSequence], pad_id: int = DEFAULT_PAD_ID
) -> CollatedBatch:
    """Right-pad a minibatch to its longest example.

    Returns a (batch, L_max) grid with an attention mask of 1 over real
    tokens and 0 over padding. Labels copy the input except the first token
    of each example and every padding cell, which become -100.
    """
    if not examples:
        raise ValueError("pad_collate requires a non-empty batch")
    cols = max(ex.length for ex in examples)
    input_ids = []
    labels = []
    mask = []
    for ex in examples:
        pad = cols - ex.length
        input_ids.append(ex.tokens + (pad_id,) * pad)
        labels.append(
            (IGNORE_LABEL,) + ex.tokens[1:] + (IGNORE_LABEL,) * pad
        )
        mask.append((1,) * ex.length + (0,) * pad)
    return CollatedBatch(
        rows=len(examples),
        cols=cols,
        input_ids=tuple(input_ids),
        labels=tuple(labels),
        attention_mask=tuple(mask),
    )


def padding_free_collate(examples: Sequence[TokenSequence]) -> CollatedBatch:
    """Flatten a minibatch into one row with per-example position IDs.

    input_ids is the plain concatenation; labels convert the first label of
    each example into -100, then concatenate; position_ids restart at 0 for
    every example. No padding cells, no attention mask.
    """
    if not examples:
        raise ValueError("padding_free_collate requires a non-empty batch")
    input_ids: list[int] = []
    labels: list[int] = []
    position_ids: list[int] = []
    for ex in examples:
        input_ids.extend(ex.tokens)
        labels.append(IGNORE_LABEL)
        labels.extend(ex.tokens[1:])
        position_ids.extend(range(ex.length))
    return CollatedBatch(
        rows=1,
        cols=len(input_ids),
        input_ids=(tuple(input_ids),),
        labels=(tuple(labels),),
        position_ids=(tuple(position_ids),),
    )


def packed_collate(
    pack: Pack,
    dataset: Sequence[TokenSequence] | Mapping[int, TokenSequence],
    with_position_ids: bool,
    pad_id: int = DEFAULT_PAD_ID,
) -> CollatedBatch:
    """Materialize one pack as a single row of `pack.capacity` columns.

    Segments are concatenated and right-padded with pad_id. With position
    IDs, a segment [s, e) keeps its original positions s..e-1, so a broken
    example continues its position run across rows; the padding region
    carries position 0 and label -100. Labels are -100 at the first token of
    every segment that starts at offset 0 of its example. Without position
    IDs the row exposes no internal boundaries at all.

    When position IDs are emitted, cu_seqlens is included too; its last
    entry is the occupied length of the row.
    """
    by_id = dataset if isinstance(dataset, Mapping) else dataset_by_id(dataset)
    input_ids: list[int] = []
    labels: list[int] = []
    position_ids: list[int] = []
    cu: list[int] = [0]
    for seg in pack.segments:
        ex = _lookup(by_id, seg.example_id)
        if seg.end > ex.length:
            raise ValueError(
                f"segment [{seg.start}, {seg.end}) exceeds example "
                f"{seg.example_id} length {ex.length}"
            )
        piece = ex.tokens[seg.start : seg.end]
        input_ids.extend(piece)
        if seg.start == 0:
            labels.append(IGNORE_LABEL)
            labels.extend(piece[1:])
        else:
            labels.extend(piece)
        position_ids.extend(range(seg.start, seg.end))
        cu.append(cu[-1] + seg.length)
    pad = pack.capacity - len(input_ids)
    input_ids.extend([pad_id] * pad)
    labels.extend([IGNORE_LABEL] * pad)
    position_ids.extend([0] * pad)
    return CollatedBatch(
        rows=1,
        cols=pack.capacity,
        input_ids=(tuple(input_ids),),
        labels=(tuple(labels),),
        position_ids=(tuple(position_ids),) if with_position_ids else None,
        cu_seqlens=tuple(cu) if with_position_ids else None,
    )


def derive_cu_seqlens(position_ids, occupied: int) -> list[int]:
    """Recover segment offsets from a position-ID row.

    Only the first `occupied` entries are read. A segment starts at index 0
    and wherever the value fails to continue the previous one; a value that
    jumps upward by more than one is structural garbage and raises.
    Returns [0, b1, ..., occupied], strictly increasing.
    """
    if len(position_ids) == 1 and not isinstance(position_ids[0], int):
        position_ids = position_ids[0]
    if not 1 <= occupied <= len(position_ids):
        raise ValueError(
            f"occupied length {occupied} outside [1, {len(position_ids)}]"
        )
    offsets = [0]
    for k in range(1, occupied):
        v, prev = position_ids[k], position_ids[k - 1]
        if v == prev + 1:
            continue
        if v > prev:
            raise ValueError(
                f"position id jump {prev} -> {v} at column {k} is neither a "
                "continuation nor a restart"
            )
        offsets.append(k)
    offsets.append(occupied)
    return offsets


def collate_unit(
    method: str,
    unit,
    by_id: Mapping[int, TokenSequence],
    pad_id: int = DEFAULT_PAD_ID,
) -> CollatedBatch:
    """Collate one plan unit with the collator its method implies."""
    if method in ONLINE_METHODS:
        if not isinstance(unit, ExampleBatch):
            raise ValueError(f"method {method} expects minibatch units")
        examples = [_lookup(by_id, eid) for eid in unit.example_ids]
        if method in POSITION_ID_METHODS:
            return padding_free_collate(examples)
        return pad_collate(examples, pad_id)
    if not isinstance(unit, Pack):
        raise ValueError(f"method {method} expects pack units")
    return packed_collate(
        unit, by_id, with_position_ids=method in POSITION_ID_METHODS, pad_id=pad_id
    )


def collate_plan(
    plan: PackingPlan,
    dataset: Sequence[TokenSequence],
    pad_id: int = DEFAULT_PAD_ID,
) -> Iterator[CollatedBatch]:
    """Collate every unit of a plan, in plan order.

    The dataset is re-truncated with the plan's msl so segments line up with
    what the planner saw.
    """
    by_id = dataset_by_id(truncate_dataset(dataset, plan.config.msl))
    for _, _, unit in plan.iter_units():
        yield collate_unit(plan.method, unit, by_id, pad_id)
