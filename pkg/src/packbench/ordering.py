"""Example orderings that feed the packers and collators.

Every function returns a true permutation of the dataset's example ids.
Ties are always broken by ascending id so orderings are fully deterministic.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .core import TokenSequence


def random_order(dataset: Sequence[TokenSequence], seed: int) -> list[int]:
    """Uniform shuffle of example ids, deterministic for a fixed seed."""
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(dataset))
    return [dataset[i].id for i in perm]


def sorted_order(dataset: Sequence[TokenSequence]) -> list[int]:
    """Example ids sorted longest-first, ties by ascending id."""
    return [ex.id for ex in sorted(dataset, key=lambda ex: (-ex.length, ex.id))]


def group_by_length_order(
    dataset: Sequence[TokenSequence], megabatch: int, seed: int
) -> list[int]:
    """Shuffle, then sort within consecutive megabatch windows, longest first.

    The window containing the globally longest example is moved to the front
    so the worst-case batch is hit early.
    """
    if megabatch < 1:
        raise ValueError(f"megabatch must be >= 1, got {megabatch}")
    by_id = {ex.id: ex for ex in dataset}
    shuffled = random_order(dataset, seed)
    windows = [shuffled[i : i + megabatch] for i in range(0, len(shuffled), megabatch)]
    windows = [
        sorted(w, key=lambda eid: (-by_id[eid].length, eid)) for w in windows
    ]
    if windows:
        longest_id = min(by_id.values(), key=lambda ex: (-ex.length, ex.id)).id
        front = next(i for i, w in enumerate(windows) if longest_id in w)
        windows.insert(0, windows.pop(front))
    return [eid for w in windows for eid in w]
