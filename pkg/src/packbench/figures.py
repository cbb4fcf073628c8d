"""Matplotlib rendering for the report paths.

Figures are written straight to files with the Agg backend and pinned
metadata so repeated renders are byte-identical.
"""

from __future__ import annotations

from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .ingest import LengthHistogram
from .metrics import MetricsReport

_SAVEFIG_KWARGS = {"dpi": 120, "metadata": {"Software": "packbench"}}


def save_length_histogram(hist: LengthHistogram, path, title: str = "") -> None:
    """Render a length histogram as a bar chart."""
    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    lefts = hist.bin_edges[:-1]
    widths = [b - a for a, b in zip(hist.bin_edges, hist.bin_edges[1:])]
    ax.bar(lefts, hist.counts, width=widths, align="edge", edgecolor="black", linewidth=0.4)
    ax.set_xlabel("sequence length (tokens)")
    ax.set_ylabel("examples")
    if title:
        ax.set_title(title)
    ax.margins(x=0.01)
    fig.tight_layout()
    fig.savefig(path, **_SAVEFIG_KWARGS)
    plt.close(fig)


def save_method_comparison(reports: Sequence[MetricsReport], path) -> None:
    """Render rows and utilization per method as paired bar charts."""
    methods = [r.method for r in reports]
    x = range(len(methods))
    fig, (ax_rows, ax_util) = plt.subplots(
        1, 2, figsize=(max(9.0, 1.6 * len(methods)), 4.2)
    )
    ax_rows.bar(x, [r.rows for r in reports], color="#4878d0")
    ax_rows.set_ylabel("tensor rows / epoch")
    ax_util.bar(x, [r.utilization for r in reports], color="#ee854a")
    ax_util.set_ylabel("utilization")
    ax_util.set_ylim(0.0, 1.05)
    for ax in (ax_rows, ax_util):
        ax.set_xticks(list(x))
        ax.set_xticklabels(methods, rotation=30, ha="right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, **_SAVEFIG_KWARGS)
    plt.close(fig)
