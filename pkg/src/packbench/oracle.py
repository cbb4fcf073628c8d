"""Dense reference attention for checking packed-example isolation.

A minimal float64 scaled-dot-product causal attention with Q = K = V set to
deterministic pseudo-random token embeddings. No learned weights: whether a
packed row leaks information across example boundaries is a property of the
mask alone, and this module measures exactly that, numerically.

Padding cells never enter the computation; the occupied length drives the
matrix sizes, mirroring variable-length attention kernels.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import CollatedBatch
from .collators import derive_cu_seqlens


def embed(input_ids: Sequence[int], d: int, seed: int) -> np.ndarray:
    """Deterministic embeddings in [-1, 1], one row per token.

    The row depends only on (token id, seed), so identical tokens map to
    identical vectors wherever they appear.
    """
    if d < 1:
        raise ValueError(f"embedding width must be >= 1, got {d}")
    cache: dict[int, np.ndarray] = {}
    out = np.empty((len(input_ids), d), dtype=np.float64)
    for i, tok in enumerate(input_ids):
        vec = cache.get(tok)
        if vec is None:
            vec = np.random.default_rng([seed, tok]).uniform(-1.0, 1.0, d)
            cache[tok] = vec
        out[i] = vec
    return out


def _segment_ids(n: int, cu_seqlens: Sequence[int]) -> np.ndarray:
    cu = np.asarray(cu_seqlens)
    if cu[0] != 0 or cu[-1] != n or np.any(np.diff(cu) <= 0):
        raise ValueError(f"cu_seqlens {list(cu_seqlens)} do not tile {n} positions")
    return np.searchsorted(cu, np.arange(n), side="right") - 1


def causal_attention(
    embeddings: np.ndarray, cu_seqlens: Sequence[int] | None = None
) -> np.ndarray:
    """softmax(Q Kᵀ / sqrt(d)) V with Q = K = V = embeddings, causally masked.

    Without cu_seqlens, position i attends to all j <= i (full causal). With
    cu_seqlens, attention is additionally confined to i's own segment
    (block-diagonal), which is the masking that variable-length attention
    applies. Masked positions are excluded before normalization.
    """
    emb = np.asarray(embeddings, dtype=np.float64)
    if emb.ndim != 2:
        raise ValueError(f"embeddings must be 2-D, got shape {emb.shape}")
    n, d = emb.shape
    allowed = np.tril(np.ones((n, n), dtype=bool))
    if cu_seqlens is not None:
        seg = _segment_ids(n, cu_seqlens)
        allowed &= seg[:, None] == seg[None, :]
    scores = emb @ emb.T / np.sqrt(d)
    # Max-subtraction over the permitted set only; disallowed entries are
    # zeroed out of the exponential rather than driven to -inf.
    row_max = np.where(allowed, scores, -np.inf).max(axis=1)
    exps = np.exp(np.where(allowed, scores - row_max[:, None], 0.0)) * allowed
    return (exps @ emb) / exps.sum(axis=1)[:, None]


def independent_attention(
    embeddings: np.ndarray, cu_seqlens: Sequence[int]
) -> np.ndarray:
    """Full causal attention run on each segment separately, concatenated."""
    emb = np.asarray(embeddings, dtype=np.float64)
    _segment_ids(emb.shape[0], cu_seqlens)
    parts = [
        causal_attention(emb[a:b])
        for a, b in zip(cu_seqlens, cu_seqlens[1:])
    ]
    return np.concatenate(parts, axis=0)


def batch_boundaries(batch: CollatedBatch) -> tuple[list[int], int]:
    """Segment offsets and occupied length of a single-row batch.

    Prefers explicit cu_seqlens; otherwise derives them from position_ids
    treating the whole row as occupied. Raises when the row carries neither.
    """
    if batch.rows != 1:
        raise ValueError(f"expected a single-row batch, got {batch.rows} rows")
    if batch.cu_seqlens is not None:
        return list(batch.cu_seqlens), batch.cu_seqlens[-1]
    if batch.position_ids is not None:
        cu = derive_cu_seqlens(batch.position_ids[0], batch.cols)
        return cu, batch.cols
    raise ValueError("batch carries neither position_ids nor cu_seqlens")


@dataclass(frozen=True)
class ContaminationReport:
    """Max deviations of two packed-attention modes from per-example attention."""

    blockdiag_max_diff: float
    naive_max_diff: float


def cross_contamination_report(
    pack_batch: CollatedBatch, d: int, seed: int
) -> ContaminationReport:
    """Compare block-diagonal and naive causal attention over a packed row
    against independent per-example attention.

    The block-diagonal deviation should vanish (the mask isolates examples);
    the naive deviation is the measurable cross-contamination of ignoring
    example boundaries.
    """
    cu, occupied = batch_boundaries(pack_batch)
    emb = embed(pack_batch.input_ids[0][:occupied], d, seed)
    independent = independent_attention(emb, cu)
    blockdiag = causal_attention(emb, cu)
    naive = causal_attention(emb)
    return ContaminationReport(
        blockdiag_max_diff=float(np.abs(blockdiag - independent).max()),
        naive_max_diff=float(np.abs(naive - independent).max()),
    )
