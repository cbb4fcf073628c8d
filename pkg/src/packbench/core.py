"""Shared data model: token sequences, segments, packs, run config, collated batches.

All types are immutable after construction and safe to share across threads.
Token IDs are opaque non-negative integers; nothing here interprets a vocabulary.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

# Label value excluded from the loss. The collators write it at the first
# token of every example and over padding cells.
IGNORE_LABEL = -100

# Pad token is configurable at the collator level; 0 is the default everywhere.
DEFAULT_PAD_ID = 0

# The eight batching strategies, by canonical tag. These tags are the CLI's
# method enum and the `method` field of every plan and report.
METHOD_RANDOM_PADDING = "RandomSampling+Padding"
METHOD_GROUPBYLENGTH_PADDING = "GroupByLength+Padding"
METHOD_MINIBATCH_POSID = "MiniBatchPacking+PosID"
METHOD_FIXEDLENGTH = "FixedLengthPacking"
METHOD_FIXEDLENGTH_POSID = "FixedLengthPacking+PosID"
METHOD_MULTIPACK_POSID = "Multipack+PosID"
METHOD_SORTEDPACKING_POSID = "SortedPacking+PosID"
METHOD_RANDOMPACKING_POSID = "RandomPacking+PosID"

METHODS = (
    METHOD_RANDOM_PADDING,
    METHOD_GROUPBYLENGTH_PADDING,
    METHOD_MINIBATCH_POSID,
    METHOD_FIXEDLENGTH,
    METHOD_FIXEDLENGTH_POSID,
    METHOD_MULTIPACK_POSID,
    METHOD_SORTEDPACKING_POSID,
    METHOD_RANDOMPACKING_POSID,
)

# Methods that consume examples one minibatch at a time (units are examples);
# the rest pack offline (units are packs).
ONLINE_METHODS = frozenset(
    {METHOD_RANDOM_PADDING, METHOD_GROUPBYLENGTH_PADDING, METHOD_MINIBATCH_POSID}
)
OFFLINE_METHODS = frozenset(METHODS) - ONLINE_METHODS

# Methods whose collated rows carry position IDs.
POSITION_ID_METHODS = frozenset(
    {
        METHOD_MINIBATCH_POSID,
        METHOD_FIXEDLENGTH_POSID,
        METHOD_MULTIPACK_POSID,
        METHOD_SORTEDPACKING_POSID,
        METHOD_RANDOMPACKING_POSID,
    }
)


@dataclass(frozen=True)
class TokenSequence:
    """One training example: an ordered list of integer token IDs."""

    id: int
    tokens: tuple[int, ...]

    def __post_init__(self):
        if self.id < 0:
            raise ValueError(f"example id must be non-negative, got {self.id}")
        if len(self.tokens) < 1:
            raise ValueError(f"example {self.id} has no tokens")
        if any(t < 0 for t in self.tokens):
            raise ValueError(f"example {self.id} contains negative token ids")
        object.__setattr__(self, "tokens", tuple(self.tokens))

    @property
    def length(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class Segment:
    """A [start, end) token range of one example assigned to an output row.

    A segment spanning the whole example is "whole"; anything else is
    "broken" and only fixed-length packing produces those.
    """

    example_id: int
    start: int
    end: int

    def __post_init__(self):
        if not 0 <= self.start < self.end:
            raise ValueError(
                f"segment range [{self.start}, {self.end}) of example "
                f"{self.example_id} is invalid"
            )

    @property
    def length(self) -> int:
        return self.end - self.start

    def is_whole(self, example_length: int) -> bool:
        return self.start == 0 and self.end == example_length


@dataclass(frozen=True)
class Pack:
    """An ordered list of segments assigned to one output row.

    `capacity` is the row's token budget (msl, or bs*msl for flattened
    fixed-length rows); `used` never exceeds it.
    """

    segments: tuple[Segment, ...]
    capacity: int

    def __post_init__(self):
        if not self.segments:
            raise ValueError("pack has no segments")
        if self.capacity < 1:
            raise ValueError(f"pack capacity must be >= 1, got {self.capacity}")
        object.__setattr__(self, "segments", tuple(self.segments))
        if self.used > self.capacity:
            raise ValueError(
                f"pack used {self.used} exceeds capacity {self.capacity}"
            )

    @property
    def used(self) -> int:
        return sum(s.length for s in self.segments)


@dataclass(frozen=True)
class RunConfig:
    """Per-run knobs: method tag plus the bs/msl/gas/world/seed tuple."""

    method: str
    bs: int
    msl: int
    gas: int
    world: int
    seed: int = 42

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        for name in ("bs", "msl", "gas", "world"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.seed < 0:
            raise ValueError(f"seed must be non-negative, got {self.seed}")

    def to_json_dict(self) -> dict:
        # Stable field order for golden-file tests.
        return {
            "bs": self.bs,
            "msl": self.msl,
            "gas": self.gas,
            "world": self.world,
            "seed": self.seed,
        }


def _validate_grid(name: str, grid: tuple[tuple[int, ...], ...], rows: int, cols: int):
    if len(grid) != rows or any(len(r) != cols for r in grid):
        raise ValueError(f"{name} does not match declared shape ({rows}, {cols})")


def _validate_position_row(row: Sequence[int]):
    # A valid row is a series of runs of consecutive integers; a new run may
    # start anywhere the value does not continue the previous one, but only
    # downward (an upward jump can never be a segment start).
    for k, v in enumerate(row):
        if v < 0:
            raise ValueError(f"negative position id at column {k}")
        if k == 0:
            continue
        prev = row[k - 1]
        if v != prev + 1 and v > prev:
            raise ValueError(
                f"position id jump {prev} -> {v} at column {k} is neither a "
                "continuation nor a restart"
            )


@dataclass(frozen=True)
class CollatedBatch:
    """Materialized batch tensors as plain integer grids.

    `input_ids` and `labels` are always present with shape (rows, cols);
    `position_ids`, `attention_mask` and `cu_seqlens` are method-dependent.
    When `cu_seqlens` is present its last entry is the occupied (non-pad)
    length of the row.
    """

    rows: int
    cols: int
    input_ids: tuple[tuple[int, ...], ...]
    labels: tuple[tuple[int, ...], ...]
    position_ids: tuple[tuple[int, ...], ...] | None = None
    attention_mask: tuple[tuple[int, ...], ...] | None = None
    cu_seqlens: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError(f"batch shape ({self.rows}, {self.cols}) is invalid")
        object.__setattr__(self, "input_ids", tuple(tuple(r) for r in self.input_ids))
        object.__setattr__(self, "labels", tuple(tuple(r) for r in self.labels))
        _validate_grid("input_ids", self.input_ids, self.rows, self.cols)
        _validate_grid("labels", self.labels, self.rows, self.cols)
        if self.position_ids is not None:
            object.__setattr__(
                self, "position_ids", tuple(tuple(r) for r in self.position_ids)
            )
            _validate_grid("position_ids", self.position_ids, self.rows, self.cols)
            for row in self.position_ids:
                _validate_position_row(row)
        if self.attention_mask is not None:
            object.__setattr__(
                self, "attention_mask", tuple(tuple(r) for r in self.attention_mask)
            )
            _validate_grid("attention_mask", self.attention_mask, self.rows, self.cols)
            if any(v not in (0, 1) for row in self.attention_mask for v in row):
                raise ValueError("attention_mask entries must be 0 or 1")
        if self.cu_seqlens is not None:
            cu = tuple(self.cu_seqlens)
            object.__setattr__(self, "cu_seqlens", cu)
            if cu[0] != 0:
                raise ValueError("cu_seqlens must start at 0")
            if any(b <= a for a, b in zip(cu, cu[1:])):
                raise ValueError("cu_seqlens must be strictly increasing")
            if cu[-1] > self.rows * self.cols:
                raise ValueError("cu_seqlens exceeds the batch extent")

    def to_json_dict(self) -> dict:
        out = {
            "rows": self.rows,
            "cols": self.cols,
            "input_ids": [list(r) for r in self.input_ids],
            "labels": [list(r) for r in self.labels],
        }
        if self.position_ids is not None:
            out["position_ids"] = [list(r) for r in self.position_ids]
        if self.attention_mask is not None:
            out["attention_mask"] = [list(r) for r in self.attention_mask]
        if self.cu_seqlens is not None:
            out["cu_seqlens"] = list(self.cu_seqlens)
        return out

    @classmethod
    def from_json_dict(cls, obj: dict) -> "CollatedBatch":
        try:
            return cls(
                rows=obj["rows"],
                cols=obj["cols"],
                input_ids=tuple(tuple(r) for r in obj["input_ids"]),
                labels=tuple(tuple(r) for r in obj["labels"]),
                position_ids=(
                    tuple(tuple(r) for r in obj["position_ids"])
                    if "position_ids" in obj
                    else None
                ),
                attention_mask=(
                    tuple(tuple(r) for r in obj["attention_mask"])
                    if "attention_mask" in obj
                    else None
                ),
                cu_seqlens=tuple(obj["cu_seqlens"]) if "cu_seqlens" in obj else None,
            )
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed batch document: {exc}") from exc


def dataset_total_tokens(dataset: Iterable[TokenSequence]) -> int:
    """Total token count of a dataset."""
    return sum(ex.length for ex in dataset)


def dataset_by_id(dataset: Iterable[TokenSequence]) -> dict[int, TokenSequence]:
    """Index a dataset by example id, rejecting duplicate ids."""
    index: dict[int, TokenSequence] = {}
    for ex in dataset:
        if ex.id in index:
            raise ValueError(f"duplicate example id {ex.id}")
        index[ex.id] = ex
    return index
