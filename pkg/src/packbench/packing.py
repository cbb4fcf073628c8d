"""Packing strategies and step/rank assignment.

Turns an ordered dataset into a PackingPlan: a per-step, per-rank layout of
units, where a unit is either a minibatch of whole example ids (online
methods) or a Pack of segments filling one flattened row (offline methods).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterator, Sequence

from .core import (
    METHOD_FIXEDLENGTH,
    METHOD_FIXEDLENGTH_POSID,
    METHOD_GROUPBYLENGTH_PADDING,
    METHOD_MINIBATCH_POSID,
    METHOD_MULTIPACK_POSID,
    METHOD_RANDOM_PADDING,
    METHOD_RANDOMPACKING_POSID,
    METHOD_SORTEDPACKING_POSID,
    ONLINE_METHODS,
    Pack,
    RunConfig,
    Segment,
    TokenSequence,
    dataset_by_id,
)
from .ordering import group_by_length_order, random_order, sorted_order

# Window size of the length-grouping sampler, as a multiple of bs * world.
DEFAULT_MEGABATCH_FACTOR = 50


@dataclass(frozen=True)
class ExampleBatch:
    """A minibatch unit: whole example ids collated together."""

    example_ids: tuple[int, ...]

    def __post_init__(self):
        if not self.example_ids:
            raise ValueError("minibatch has no examples")
        object.__setattr__(self, "example_ids", tuple(self.example_ids))


Unit = ExampleBatch | Pack

# One optimizer step: exactly `world` rank entries, each a tuple of units
# (one unit per rank-microbatch; trailing steps may leave ranks short).
Step = tuple[tuple[Unit, ...], ...]


@dataclass(frozen=True)
class PackingPlan:
    """Method tag plus the per-step, per-rank unit assignment."""

    method: str
    config: RunConfig
    steps: tuple[Step, ...]

    def __post_init__(self):
        if self.method != self.config.method:
            raise ValueError("plan method and config method disagree")
        for i, step in enumerate(self.steps):
            if len(step) != self.config.world:
                raise ValueError(
                    f"step {i} has {len(step)} rank entries, expected "
                    f"{self.config.world}"
                )

    @property
    def n_steps(self) -> int:
        return len(self.steps)

    def iter_units(self) -> Iterator[tuple[int, int, Unit]]:
        """Yield (step, rank, unit) in plan order."""
        for s, step in enumerate(self.steps):
            for r, rank_units in enumerate(step):
                for unit in rank_units:
                    yield s, r, unit


def truncate_dataset(
    dataset: Sequence[TokenSequence], msl: int
) -> list[TokenSequence]:
    """Clip every example to at most msl tokens (the pre-pass all methods share)."""
    return [
        ex if ex.length <= msl else TokenSequence(ex.id, ex.tokens[:msl])
        for ex in dataset
    ]


def fixed_length_pack(
    order: Sequence[int], dataset: Sequence[TokenSequence], row_capacity: int
) -> list[Pack]:
    """Cut the concatenated ordered token stream into rows of exactly
    `row_capacity` tokens.

    Examples straddling a cut are split into broken segments. The final pack
    keeps whatever remains and its capacity shrinks to match, so fixed-length
    rows never carry padding.
    """
    if row_capacity < 1:
        raise ValueError(f"row_capacity must be >= 1, got {row_capacity}")
    by_id = dataset_by_id(dataset)
    packs: list[Pack] = []
    segments: list[Segment] = []
    room = row_capacity
    for eid in order:
        ex = by_id[eid]
        pos = 0
        while pos < ex.length:
            take = min(room, ex.length - pos)
            segments.append(Segment(eid, pos, pos + take))
            pos += take
            room -= take
            if room == 0:
                packs.append(Pack(tuple(segments), row_capacity))
                segments = []
                room = row_capacity
    if segments:
        used = sum(s.length for s in segments)
        packs.append(Pack(tuple(segments), used))
    return packs


def greedy_sequential_pack(
    order: Sequence[int], dataset: Sequence[TokenSequence], capacity: int
) -> list[Pack]:
    """Pack whole examples first-come-first-serve into rows of `capacity`.

    Keeps exactly one pack open: an example that does not fit closes the pack
    and opens a new one. Examples are never broken; every example must fit
    (run the truncation pre-pass first).
    """
    by_id = dataset_by_id(dataset)
    packs: list[Pack] = []
    segments: list[Segment] = []
    used = 0
    for eid in order:
        ex = by_id[eid]
        if ex.length > capacity:
            raise ValueError(
                f"example {eid} has {ex.length} tokens > capacity {capacity}; "
                "truncate first"
            )
        if used + ex.length > capacity:
            packs.append(Pack(tuple(segments), capacity))
            segments = []
            used = 0
        segments.append(Segment(eid, 0, ex.length))
        used += ex.length
    if segments:
        packs.append(Pack(tuple(segments), capacity))
    return packs


def ffd_multipack(
    dataset: Sequence[TokenSequence], capacity: int, world: int
) -> list[list[Pack]]:
    """First-fit-decreasing packing, dealt to ranks round-robin.

    Whole examples are sorted longest-first (ties by ascending id) and each
    is placed into the first open pack with room, else a new pack. Packs are
    dealt to ranks round-robin in creation order, so per-rank pack counts
    differ by at most one.
    """
    if world < 1:
        raise ValueError(f"world must be >= 1, got {world}")
    items = sorted(dataset, key=lambda ex: (-ex.length, ex.id))
    bins: list[list[Segment]] = []
    remaining: list[int] = []
    for ex in items:
        if ex.length > capacity:
            raise ValueError(
                f"example {ex.id} has {ex.length} tokens > capacity {capacity}; "
                "truncate first"
            )
        for i, room in enumerate(remaining):
            if ex.length <= room:
                bins[i].append(Segment(ex.id, 0, ex.length))
                remaining[i] -= ex.length
                break
        else:
            bins.append([Segment(ex.id, 0, ex.length)])
            remaining.append(capacity - ex.length)
    ranks: list[list[Pack]] = [[] for _ in range(world)]
    for i, segments in enumerate(bins):
        ranks[i % world].append(Pack(tuple(segments), capacity))
    return ranks


def _deal_steps(units: Sequence[Unit], world: int, gas: int) -> tuple[Step, ...]:
    # Contiguous dealing preserves unit order across (step, rank, slot)
    # iteration; the final partial step is split evenly so per-rank unit
    # counts never differ by more than one.
    per_step = world * gas
    steps: list[Step] = []
    for base in range(0, len(units), per_step):
        chunk = units[base : base + per_step]
        if len(chunk) == per_step:
            step = tuple(
                tuple(chunk[r * gas : (r + 1) * gas]) for r in range(world)
            )
        else:
            q, rem = divmod(len(chunk), world)
            ranks = []
            pos = 0
            for r in range(world):
                take = q + 1 if r < rem else q
                ranks.append(tuple(chunk[pos : pos + take]))
                pos += take
            step = tuple(ranks)
        steps.append(step)
    return tuple(steps)


def assign_plan(units, config: RunConfig) -> PackingPlan:
    """Group strategy output into optimizer steps.

    Online methods take a flat ordering of example ids (grouped bs at a time
    into minibatches); offline methods take a flat list of packs, or per-rank
    pack lists for the multipack sampler. Each step spans world ranks with
    gas rank-microbatches each; the final partial step is retained.
    """
    if config.method in ONLINE_METHODS:
        ids = list(units)
        if any(not isinstance(i, int) for i in ids):
            raise ValueError("online methods take a flat ordering of example ids")
        minibatches = [
            ExampleBatch(tuple(ids[i : i + config.bs]))
            for i in range(0, len(ids), config.bs)
        ]
        steps = _deal_steps(minibatches, config.world, config.gas)
    elif config.method == METHOD_MULTIPACK_POSID:
        rank_lists = [list(r) for r in units]
        if len(rank_lists) != config.world:
            raise ValueError(
                f"multipack expects {config.world} per-rank pack lists, got "
                f"{len(rank_lists)}"
            )
        n_steps = max(
            (-(-len(r) // config.gas) for r in rank_lists), default=0
        )
        steps = tuple(
            tuple(
                tuple(rank_lists[r][s * config.gas : (s + 1) * config.gas])
                for r in range(config.world)
            )
            for s in range(n_steps)
        )
    else:
        packs = list(units)
        if any(not isinstance(p, Pack) for p in packs):
            raise ValueError("offline methods take a flat list of packs")
        steps = _deal_steps(packs, config.world, config.gas)
    return PackingPlan(method=config.method, config=config, steps=steps)


def default_megabatch(config: RunConfig) -> int:
    return DEFAULT_MEGABATCH_FACTOR * config.bs * config.world


def build_plan(
    dataset: Sequence[TokenSequence],
    config: RunConfig,
    megabatch: int | None = None,
) -> PackingPlan:
    """Run the full pipeline for a method: truncate, order, pack, assign."""
    data = truncate_dataset(dataset, config.msl)
    method = config.method
    if method in (METHOD_RANDOM_PADDING, METHOD_MINIBATCH_POSID):
        units = random_order(data, config.seed)
    elif method == METHOD_GROUPBYLENGTH_PADDING:
        if megabatch is None:
            megabatch = default_megabatch(config)
        units = group_by_length_order(data, megabatch, config.seed)
    elif method in (METHOD_FIXEDLENGTH, METHOD_FIXEDLENGTH_POSID):
        order = random_order(data, config.seed)
        units = fixed_length_pack(order, data, config.bs * config.msl)
    elif method == METHOD_MULTIPACK_POSID:
        units = ffd_multipack(data, config.msl, config.world)
    elif method == METHOD_SORTEDPACKING_POSID:
        units = greedy_sequential_pack(sorted_order(data), data, config.msl)
    elif method == METHOD_RANDOMPACKING_POSID:
        units = greedy_sequential_pack(
            random_order(data, config.seed), data, config.msl
        )
    else:  # pragma: no cover - RunConfig already validates the tag
        raise ValueError(f"unknown method {method!r}")
    return assign_plan(units, config)


def _unit_to_json(unit: Unit):
    if isinstance(unit, ExampleBatch):
        return list(unit.example_ids)
    return {
        "capacity": unit.capacity,
        "segments": [[s.example_id, s.start, s.end] for s in unit.segments],
    }


def _unit_from_json(obj) -> Unit:
    if isinstance(obj, list):
        return ExampleBatch(tuple(obj))
    return Pack(
        segments=tuple(Segment(eid, s, e) for eid, s, e in obj["segments"]),
        capacity=obj["capacity"],
    )


def plan_to_json(plan: PackingPlan) -> str:
    """Serialize a plan with stable field order."""
    doc = {
        "method": plan.method,
        "config": plan.config.to_json_dict(),
        "steps": [
            [[_unit_to_json(u) for u in rank_units] for rank_units in step]
            for step in plan.steps
        ],
    }
    return json.dumps(doc, separators=(",", ":"))


def plan_from_json(text: str) -> PackingPlan:
    doc = json.loads(text)
    try:
        config = RunConfig(method=doc["method"], **doc["config"])
        steps = tuple(
            tuple(
                tuple(_unit_from_json(u) for u in rank_units) for rank_units in step
            )
            for step in doc["steps"]
        )
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed plan document: {exc}") from exc
    return PackingPlan(method=doc["method"], config=config, steps=steps)
