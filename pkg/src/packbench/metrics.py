"""Plan simulation and method comparison.

Simulating a plan tallies the accounting a training run would see: tensor
rows, optimizer steps, useful vs padding cells, utilization, and per-rank
balance. Small plans are fully materialized through the collators; large
ones are tallied from shape bookkeeping alone (the two paths agree exactly
and tests hold them to that).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .collators import collate_unit
from .core import (
    METHODS,
    POSITION_ID_METHODS,
    CollatedBatch,
    Pack,
    RunConfig,
    TokenSequence,
    dataset_by_id,
    dataset_total_tokens,
)
from .oracle import (
    causal_attention,
    cross_contamination_report,
    embed,
    independent_attention,
)
from .packing import ExampleBatch, PackingPlan, build_plan, truncate_dataset

# Above this many dataset tokens, simulate() skips materializing tensors.
MATERIALIZE_THRESHOLD_TOKENS = 100_000

COMPARISON_COLUMNS = (
    "method",
    "rows",
    "steps",
    "useful_tokens",
    "pad_tokens",
    "utilization",
    "imbalance",
    "broken_examples",
)


@dataclass(frozen=True)
class MetricsReport:
    """Epoch accounting for one batching method."""

    method: str
    rows: int
    steps: int
    useful_tokens: int
    pad_tokens: int
    total_cells: int
    utilization: float
    per_rank_tokens: tuple[int, ...]
    imbalance: float
    broken_examples: int

    def to_json_dict(self) -> dict:
        return {
            "method": self.method,
            "rows": self.rows,
            "steps": self.steps,
            "useful_tokens": self.useful_tokens,
            "pad_tokens": self.pad_tokens,
            "total_cells": self.total_cells,
            "utilization": self.utilization,
            "per_rank_tokens": list(self.per_rank_tokens),
            "imbalance": self.imbalance,
            "broken_examples": self.broken_examples,
        }


def _check_unit(unit, lengths: dict[int, int]):
    if isinstance(unit, ExampleBatch):
        for eid in unit.example_ids:
            if eid not in lengths:
                raise ValueError(f"plan references unknown example id {eid}")
    else:
        for seg in unit.segments:
            length = lengths.get(seg.example_id)
            if length is None:
                raise ValueError(
                    f"plan references unknown example id {seg.example_id}"
                )
            if seg.end > length:
                raise ValueError(
                    f"segment [{seg.start}, {seg.end}) exceeds example "
                    f"{seg.example_id} length {length}"
                )


def _broken_ids(unit, lengths: dict[int, int]) -> set[int]:
    if isinstance(unit, ExampleBatch):
        return set()
    return {
        seg.example_id
        for seg in unit.segments
        if not seg.is_whole(lengths[seg.example_id])
    }


def simulate(
    plan: PackingPlan,
    dataset: Sequence[TokenSequence],
    pad_id: int = 0,
    materialize_threshold: int = MATERIALIZE_THRESHOLD_TOKENS,
) -> MetricsReport:
    """Tally the MetricsReport a plan implies over its dataset.

    Deterministic; raises on any plan/dataset mismatch. Datasets up to
    `materialize_threshold` tokens are collated in full, larger ones are
    tallied from shapes only; the results are identical either way.
    """
    truncated = truncate_dataset(dataset, plan.config.msl)
    lengths = {ex.id: ex.length for ex in truncated}
    if len(lengths) != len(truncated):
        raise ValueError("dataset contains duplicate example ids")
    materialize = dataset_total_tokens(dataset) <= materialize_threshold
    by_id = dataset_by_id(truncated) if materialize else None
    flattens = plan.method in POSITION_ID_METHODS

    rows = useful = cells = 0
    per_rank = [0] * plan.config.world
    broken: set[int] = set()
    for _, rank, unit in plan.iter_units():
        _check_unit(unit, lengths)
        if materialize:
            batch = collate_unit(plan.method, unit, by_id, pad_id)
            unit_useful, unit_cells, unit_rows = _tally_batch(batch, unit, flattens)
        else:
            unit_useful, unit_cells, unit_rows = _tally_shape(unit, lengths, flattens)
        rows += unit_rows
        useful += unit_useful
        cells += unit_cells
        per_rank[rank] += unit_useful
        broken |= _broken_ids(unit, lengths)
    if cells == 0:
        raise ValueError("plan is empty; nothing to simulate")
    mean_rank = sum(per_rank) / len(per_rank)
    imbalance = (max(per_rank) - min(per_rank)) / mean_rank if mean_rank else 0.0
    return MetricsReport(
        method=plan.method,
        rows=rows,
        steps=plan.n_steps,
        useful_tokens=useful,
        pad_tokens=cells - useful,
        total_cells=cells,
        utilization=useful / cells,
        per_rank_tokens=tuple(per_rank),
        imbalance=imbalance,
        broken_examples=len(broken),
    )


def _tally_shape(unit, lengths, flattens: bool):
    if isinstance(unit, ExampleBatch):
        ls = [lengths[eid] for eid in unit.example_ids]
        if flattens:
            return sum(ls), sum(ls), len(ls)
        return sum(ls), len(ls) * max(ls), len(ls)
    return unit.used, unit.capacity, 1


def _tally_batch(batch: CollatedBatch, unit, flattens: bool):
    if isinstance(unit, ExampleBatch):
        # Rows count consumed examples for online methods, matching how the
        # per-epoch row totals equal the dataset size regardless of shape.
        n_examples = len(unit.example_ids)
        if flattens:
            return batch.cols, batch.cols, n_examples
        occupied = sum(sum(r) for r in batch.attention_mask)
        return occupied, batch.rows * batch.cols, n_examples
    occupied = batch.cu_seqlens[-1] if batch.cu_seqlens is not None else unit.used
    return occupied, batch.cols, 1


def throughput_proxy(report: MetricsReport, cost_model: str) -> int:
    """Work units a method implies: processed cells or useful tokens.

    The cells mode charges padding; the ratio of two methods' cell counts is
    the predicted relative speedup.
    """
    if cost_model == "cells":
        return report.total_cells
    if cost_model == "tokens":
        return report.useful_tokens
    raise ValueError(f"unknown cost model {cost_model!r}")


@dataclass(frozen=True)
class MethodComparison:
    """Side-by-side reports, one row per method."""

    reports: tuple[MetricsReport, ...]

    def __post_init__(self):
        if not self.reports:
            raise ValueError("comparison needs at least one report")
        object.__setattr__(self, "reports", tuple(self.reports))

    def to_csv(self) -> str:
        lines = [",".join(COMPARISON_COLUMNS)]
        for r in self.reports:
            lines.append(
                f"{r.method},{r.rows},{r.steps},{r.useful_tokens},"
                f"{r.pad_tokens},{r.utilization:.6f},{r.imbalance:.6f},"
                f"{r.broken_examples}"
            )
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        rows = [list(COMPARISON_COLUMNS)]
        for r in self.reports:
            rows.append(
                [
                    r.method,
                    str(r.rows),
                    str(r.steps),
                    str(r.useful_tokens),
                    str(r.pad_tokens),
                    f"{r.utilization:.4f}",
                    f"{r.imbalance:.4f}",
                    str(r.broken_examples),
                ]
            )
        widths = [max(len(row[c]) for row in rows) for c in range(len(rows[0]))]
        out = []
        for row in rows:
            out.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
        return "\n".join(out) + "\n"


def compare(reports: Sequence[MetricsReport]) -> MethodComparison:
    """Align reports into a comparison table, in the given order."""
    return MethodComparison(tuple(reports))


@dataclass(frozen=True)
class MethodMatrixRow:
    """Measured per-method behaviour for the strategy characteristics table."""

    method: str
    uses_position_ids: bool
    correct_cross_attention: bool
    no_broken_examples: bool
    broken_examples: int
    max_boundary_deviation: float


def _unit_attention_deviation(
    method: str, unit, batch: CollatedBatch, d: int, seed: int
) -> float:
    """Deviation of the attention this method actually computes from
    independent per-example attention."""
    if batch.position_ids is not None:
        return cross_contamination_report(batch, d, seed).blockdiag_max_diff
    if isinstance(unit, Pack):
        # No position ids: the row is processed as one undifferentiated
        # causal sequence. Boundaries for the reference come from the plan.
        cu = [0]
        for seg in unit.segments:
            cu.append(cu[-1] + seg.length)
        emb = embed(batch.input_ids[0][: cu[-1]], d, seed)
        naive = causal_attention(emb)
        return float(np.abs(naive - independent_attention(emb, cu)).max())
    # Padded rows: the mask confines each row to its own example, so the
    # effective attention is single-segment.
    worst = 0.0
    for row, mask in zip(batch.input_ids, batch.attention_mask):
        occupied = sum(mask)
        emb = embed(row[:occupied], d, seed)
        rep = np.abs(
            causal_attention(emb, [0, occupied])
            - independent_attention(emb, [0, occupied])
        ).max()
        worst = max(worst, float(rep))
    return worst


def method_matrix(
    dataset: Sequence[TokenSequence],
    bs: int,
    msl: int,
    gas: int,
    world: int,
    seed: int = 42,
    d: int = 32,
    checked_units: int = 4,
    tolerance: float = 1e-6,
) -> list[MethodMatrixRow]:
    """Run every method end to end and measure its characteristics.

    For each method, up to `checked_units` collated units (preferring
    multi-example ones, where contamination can appear at all) are pushed
    through the attention oracle; cross-attention counts as correct when
    every checked unit stays within `tolerance` of independent per-example
    attention.
    """
    out = []
    for method in METHODS:
        config = RunConfig(method, bs=bs, msl=msl, gas=gas, world=world, seed=seed)
        plan = build_plan(dataset, config)
        report = simulate(plan, dataset)
        by_id = dataset_by_id(truncate_dataset(dataset, msl))

        multi, single = [], []
        for _, _, unit in plan.iter_units():
            count = (
                len(unit.example_ids)
                if isinstance(unit, ExampleBatch)
                else len(unit.segments)
            )
            (multi if count > 1 else single).append(unit)
        to_check = (multi + single)[:checked_units]

        uses_pos = False
        worst = 0.0
        for unit in to_check:
            batch = collate_unit(method, unit, by_id)
            uses_pos = batch.position_ids is not None
            worst = max(
                worst, _unit_attention_deviation(method, unit, batch, d, seed)
            )
        out.append(
            MethodMatrixRow(
                method=method,
                uses_position_ids=uses_pos,
                correct_cross_attention=worst < tolerance,
                no_broken_examples=report.broken_examples == 0,
                broken_examples=report.broken_examples,
                max_boundary_deviation=worst,
            )
        )
    return out
