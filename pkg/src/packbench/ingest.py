"""Dataset loading, synthetic generation, and length statistics.

Datasets are UTF-8 JSON-lines files, one record per line. Two record
grammars are accepted:

    tokens  format: {"input_ids": [10, 11, 12]}
    lengths format: {"length": 5}

In lengths format the tokens are synthesized as ``id * 1000 + offset`` so
packing tests can still tell examples apart.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import TokenSequence


class DatasetParseError(ValueError):
    """A dataset record failed to parse; carries the 1-based line number."""

    def __init__(self, path, line_no: int, message: str):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = path
        self.line_no = line_no


@dataclass(frozen=True)
class Lognormal:
    """Length ~ round(lognormal(mu, sigma)); mu/sigma describe the underlying normal."""

    mu: float
    sigma: float


@dataclass(frozen=True)
class Uniform:
    """Length ~ integer uniform on [lo, hi], inclusive."""

    lo: int
    hi: int

    def __post_init__(self):
        if not 1 <= self.lo <= self.hi:
            raise ValueError(f"uniform bounds ({self.lo}, {self.hi}) are invalid")


@dataclass(frozen=True)
class Bimodal:
    """Mixture of two normals in length space; modes land near mu1 and mu2.

    `weight` is the probability of drawing from the first component.
    """

    mu1: float
    sigma1: float
    mu2: float
    sigma2: float
    weight: float

    def __post_init__(self):
        if not 0.0 <= self.weight <= 1.0:
            raise ValueError(f"mixture weight {self.weight} outside [0, 1]")


Distribution = Lognormal | Uniform | Bimodal


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for a synthetic dataset with a controlled length distribution."""

    n: int
    distribution: Distribution
    min_len: int = 1
    max_len: int = 4096
    seed: int = 42

    def __post_init__(self):
        if self.n < 0:
            raise ValueError(f"n must be non-negative, got {self.n}")
        if not 1 <= self.min_len <= self.max_len:
            raise ValueError(
                f"length bounds ({self.min_len}, {self.max_len}) are invalid"
            )
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


@dataclass(frozen=True)
class LengthHistogram:
    """Binned example-length counts plus exact summary statistics.

    Bins are right-closed: a length L falls in bin i when
    bin_edges[i] < L <= bin_edges[i+1]. Variance is the population variance.
    """

    bin_edges: tuple[int, ...]
    counts: tuple[int, ...]
    mean: float
    variance: float
    min: int
    max: int
    mode_bin: int


# Stand-ins for the three instruct-tuning corpora the length shapes come
# from: a short-mode heavy-tail set (mode ~100), a mid-mode tighter set
# (mode ~400), and a long high-variance code-like set.
PRESET_DISTRIBUTIONS: dict[str, Distribution] = {
    "flan": Lognormal(mu=math.log(100.0) + 1.0, sigma=1.0),
    "orcamath": Lognormal(mu=math.log(400.0) + 0.25, sigma=0.5),
    "stack": Lognormal(mu=math.log(1000.0) + 1.44, sigma=1.2),
}


def preset_spec(name: str, n: int, seed: int = 42, max_len: int = 4096) -> SynthSpec:
    """Synthetic spec for one of the named corpus-like presets."""
    if name not in PRESET_DISTRIBUTIONS:
        raise ValueError(
            f"unknown preset {name!r}; expected one of {sorted(PRESET_DISTRIBUTIONS)}"
        )
    return SynthSpec(
        n=n, distribution=PRESET_DISTRIBUTIONS[name], min_len=1, max_len=max_len, seed=seed
    )


def _synth_tokens(example_id: int, length: int) -> tuple[int, ...]:
    # Deterministic distinct tokens for length-only records.
    base = example_id * 1000
    return tuple(base + k for k in range(length))


def load_dataset(path, format: str = "auto") -> list[TokenSequence]:
    """Load a JSON-lines dataset; returns sequences in file order, ids 0..n-1.

    `format` is "tokens", "lengths", or "auto" (sniff from the first record).
    Blank lines are ignored. Malformed records raise DatasetParseError with
    the offending line number.
    """
    if format not in ("tokens", "lengths", "auto"):
        raise ValueError(f"unknown dataset format {format!r}")
    dataset: list[TokenSequence] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetParseError(path, line_no, f"invalid JSON ({exc.msg})")
            if not isinstance(record, dict):
                raise DatasetParseError(path, line_no, "record is not a JSON object")
            if format == "auto":
                format = "tokens" if "input_ids" in record else "lengths"
            example_id = len(dataset)
            if format == "tokens":
                tokens = record.get("input_ids")
                if not isinstance(tokens, list) or any(
                    not isinstance(t, int) or isinstance(t, bool) or t < 0
                    for t in tokens
                ):
                    raise DatasetParseError(
                        path, line_no, "expected an 'input_ids' list of non-negative ints"
                    )
                if len(tokens) == 0:
                    raise DatasetParseError(path, line_no, "zero-length example")
                dataset.append(TokenSequence(id=example_id, tokens=tuple(tokens)))
            else:
                length = record.get("length")
                if not isinstance(length, int) or isinstance(length, bool):
                    raise DatasetParseError(path, line_no, "expected an integer 'length'")
                if length < 1:
                    raise DatasetParseError(path, line_no, "zero-length example")
                dataset.append(
                    TokenSequence(id=example_id, tokens=_synth_tokens(example_id, length))
                )
    return dataset


def save_dataset(dataset: Iterable[TokenSequence], path) -> None:
    """Write a dataset as tokens-format JSON-lines."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for ex in dataset:
            fh.write(json.dumps({"input_ids": list(ex.tokens)}) + "\n")


def _draw_lengths(spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    dist = spec.distribution
    if isinstance(dist, Lognormal):
        raw = rng.lognormal(dist.mu, dist.sigma, spec.n)
    elif isinstance(dist, Uniform):
        return rng.integers(dist.lo, dist.hi + 1, spec.n)
    elif isinstance(dist, Bimodal):
        pick_first = rng.random(spec.n) < dist.weight
        first = rng.normal(dist.mu1, dist.sigma1, spec.n)
        second = rng.normal(dist.mu2, dist.sigma2, spec.n)
        raw = np.where(pick_first, first, second)
    else:
        raise TypeError(f"unsupported distribution {dist!r}")
    return np.rint(raw).astype(np.int64)


def generate_synthetic(spec: SynthSpec) -> list[TokenSequence]:
    """Generate a deterministic synthetic dataset for a spec."""
    rng = np.random.default_rng(spec.seed)
    lengths = np.clip(_draw_lengths(spec, rng), spec.min_len, spec.max_len)
    return [
        TokenSequence(id=i, tokens=_synth_tokens(i, int(length)))
        for i, length in enumerate(lengths)
    ]


def length_stats(dataset: Sequence[TokenSequence], bin_width: int) -> LengthHistogram:
    """Bin example lengths into right-closed bins of `bin_width` tokens.

    The histogram spans (0, max length rounded up to a bin boundary]; the
    summary statistics are exact (population variance).
    """
    if not dataset:
        raise ValueError("length_stats requires a non-empty dataset")
    if bin_width < 1:
        raise ValueError(f"bin_width must be >= 1, got {bin_width}")
    lengths = np.array([ex.length for ex in dataset], dtype=np.int64)
    top = -(-int(lengths.max()) // bin_width) * bin_width
    edges = np.arange(0, top + bin_width, bin_width, dtype=np.int64)
    # Right-closed bins: length L lands in bin i iff edges[i] < L <= edges[i+1].
    bin_index = np.searchsorted(edges, lengths, side="left") - 1
    counts = np.bincount(bin_index, minlength=len(edges) - 1)
    return LengthHistogram(
        bin_edges=tuple(int(e) for e in edges),
        counts=tuple(int(c) for c in counts),
        mean=float(lengths.mean()),
        variance=float(lengths.var()),
        min=int(lengths.min()),
        max=int(lengths.max()),
        mode_bin=int(counts.argmax()),
    )


def histogram_csv(hist: LengthHistogram) -> str:
    """Render a histogram as CSV: bin rows plus a trailing summary line."""
    lines = ["bin_lo,bin_hi,count"]
    for i, count in enumerate(hist.counts):
        lines.append(f"{hist.bin_edges[i]},{hist.bin_edges[i + 1]},{count}")
    n = sum(hist.counts)
    lines.append(
        f"# n={n} mean={hist.mean:.6f} variance={hist.variance:.6f} "
        f"min={hist.min} max={hist.max} mode_bin={hist.mode_bin}"
    )
    return "\n".join(lines) + "\n"
