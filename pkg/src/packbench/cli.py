"""Command-line entry point.

Subcommands: stats | gen | plan | collate | verify | simulate. Every command
is deterministic given its inputs, flags, and seed; seeds are echoed in the
output headers. Exit codes: 0 success, 1 validation/verification failure,
2 usage error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

from . import figures
from .collators import collate_plan
from .core import METHODS, CollatedBatch, RunConfig
from .ingest import (
    DatasetParseError,
    PRESET_DISTRIBUTIONS,
    Bimodal,
    Lognormal,
    SynthSpec,
    Uniform,
    generate_synthetic,
    histogram_csv,
    length_stats,
    load_dataset,
    save_dataset,
)
from .metrics import compare, simulate
from .oracle import cross_contamination_report
from .packing import build_plan, plan_from_json, plan_to_json

VERIFY_TOLERANCE = 1e-6


def _write_output(args, text: str) -> None:
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _add_run_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--bs", type=int, default=4, help="minibatch size per rank")
    parser.add_argument(
        "--msl", type=int, default=4096, help="max sequence length per example/pack"
    )
    parser.add_argument("--gas", type=int, default=2, help="gradient accumulation steps")
    parser.add_argument("--world", type=int, default=8, help="number of ranks")
    parser.add_argument(
        "--megabatch",
        type=int,
        default=None,
        help="length-grouping window (default 50*bs*world)",
    )


def cmd_stats(args) -> int:
    dataset = load_dataset(args.dataset)
    hist = length_stats(dataset, args.bin_width)
    _write_output(args, f"# seed={args.seed}\n" + histogram_csv(hist))
    if args.fig:
        figures.save_length_histogram(hist, args.fig)
    return 0


def cmd_gen(args) -> int:
    if args.preset:
        distribution = PRESET_DISTRIBUTIONS[args.preset]
    elif args.dist == "lognormal":
        distribution = Lognormal(args.mu, args.sigma)
    elif args.dist == "uniform":
        distribution = Uniform(args.lo, args.hi)
    elif args.dist == "bimodal":
        distribution = Bimodal(args.mu1, args.sigma1, args.mu2, args.sigma2, args.weight)
    else:
        raise ValueError("gen requires --preset or --dist")
    spec = SynthSpec(
        n=args.n,
        distribution=distribution,
        min_len=args.min_len,
        max_len=args.max_len,
        seed=args.seed,
    )
    dataset = generate_synthetic(spec)
    if args.out:
        save_dataset(dataset, args.out)
    else:
        for ex in dataset:
            sys.stdout.write(json.dumps({"input_ids": list(ex.tokens)}) + "\n")
    return 0


def _run_config(args, method: str) -> RunConfig:
    return RunConfig(
        method=method,
        bs=args.bs,
        msl=args.msl,
        gas=args.gas,
        world=args.world,
        seed=args.seed,
    )


def cmd_plan(args) -> int:
    dataset = load_dataset(args.dataset)
    plan = build_plan(dataset, _run_config(args, args.method), args.megabatch)
    _write_output(args, plan_to_json(plan) + "\n")
    return 0


def cmd_collate(args) -> int:
    with open(args.plan, "r", encoding="utf-8") as fh:
        plan = plan_from_json(fh.read())
    dataset = load_dataset(args.dataset)
    lines = [
        json.dumps(batch.to_json_dict())
        for batch in collate_plan(plan, dataset, args.pad_id)
    ]
    _write_output(args, "".join(line + "\n" for line in lines))
    return 0


def _verify_row(line: str, d: int, seed: int):
    batch = CollatedBatch.from_json_dict(json.loads(line))
    return cross_contamination_report(batch, d, seed)


def cmd_verify(args) -> int:
    with open(args.collated, "r", encoding="utf-8") as fh:
        lines = [line for line in fh if line.strip()]
    threads = int(os.environ.get("PACKBENCH_THREADS", "1"))
    if threads > 1 and len(lines) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            reports = list(
                pool.map(lambda ln: _verify_row(ln, args.embed_dim, args.seed), lines)
            )
    else:
        reports = [_verify_row(ln, args.embed_dim, args.seed) for ln in lines]
    blockdiag = max((r.blockdiag_max_diff for r in reports), default=0.0)
    naive = max((r.naive_max_diff for r in reports), default=0.0)
    passed = blockdiag < VERIFY_TOLERANCE
    doc = {
        "seed": args.seed,
        "blockdiag_max_diff": blockdiag,
        "naive_max_diff": naive,
        "pass": passed,
    }
    _write_output(args, json.dumps(doc) + "\n")
    return 0 if passed else 1


def cmd_simulate(args) -> int:
    dataset = load_dataset(args.dataset)
    methods = (
        list(METHODS) if args.methods == "all" else args.methods.split(",")
    )
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}")
    reports = []
    for method in methods:
        plan = build_plan(dataset, _run_config(args, method), args.megabatch)
        reports.append(simulate(plan, dataset, args.pad_id))
    table = compare(reports)
    if args.format == "json":
        doc = {"seed": args.seed, "reports": [r.to_json_dict() for r in reports]}
        _write_output(args, json.dumps(doc) + "\n")
    else:
        _write_output(args, f"# seed={args.seed}\n" + table.to_csv())
    if args.fig:
        figures.save_method_comparison(reports, args.fig)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=42, help="RNG seed")
    common.add_argument("--out", default=None, help="output file (default stdout)")
    common.add_argument(
        "--format", choices=("csv", "json"), default="csv", help="report format"
    )

    parser = argparse.ArgumentParser(
        prog="packbench",
        description="Compare sequence-batching strategies: padding, padding-free "
        "flattening, and packed rows with position IDs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", parents=[common], help="length histogram of a dataset")
    p.add_argument("dataset", help="JSON-lines dataset path")
    p.add_argument("--bin-width", type=int, default=50, help="histogram bin width")
    p.add_argument("--fig", default=None, help="also render the histogram to this file")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("gen", parents=[common], help="generate a synthetic dataset")
    p.add_argument("--preset", choices=sorted(PRESET_DISTRIBUTIONS), default=None)
    p.add_argument("--dist", choices=("lognormal", "uniform", "bimodal"), default=None)
    p.add_argument("--n", type=int, required=True, help="number of examples")
    p.add_argument("--min-len", type=int, default=1)
    p.add_argument("--max-len", type=int, default=4096)
    p.add_argument("--mu", type=float, default=5.6, help="lognormal mu")
    p.add_argument("--sigma", type=float, default=1.0, help="lognormal sigma")
    p.add_argument("--lo", type=int, default=1, help="uniform lower bound")
    p.add_argument("--hi", type=int, default=512, help="uniform upper bound")
    p.add_argument("--mu1", type=float, default=100.0, help="bimodal first mode")
    p.add_argument("--sigma1", type=float, default=25.0)
    p.add_argument("--mu2", type=float, default=800.0, help="bimodal second mode")
    p.add_argument("--sigma2", type=float, default=100.0)
    p.add_argument("--weight", type=float, default=0.5, help="first-component weight")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("plan", parents=[common], help="build a packing plan")
    p.add_argument("dataset")
    p.add_argument("--method", choices=METHODS, required=True)
    _add_run_config_flags(p)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("collate", parents=[common], help="materialize a plan as batches")
    p.add_argument("plan", help="plan JSON path")
    p.add_argument("dataset", help="JSON-lines dataset path")
    p.add_argument("--pad-id", type=int, default=0)
    p.set_defaults(func=cmd_collate)

    p = sub.add_parser(
        "verify", parents=[common], help="check packed rows for cross-contamination"
    )
    p.add_argument("collated", help="collated JSONL path")
    p.add_argument("-d", "--embed-dim", type=int, default=32)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser(
        "simulate", parents=[common], help="plan, simulate, and compare methods"
    )
    p.add_argument("dataset")
    p.add_argument(
        "--methods", default="all", help="comma-separated method tags, or 'all'"
    )
    _add_run_config_flags(p)
    p.add_argument("--pad-id", type=int, default=0)
    p.add_argument("--fig", default=None, help="also render the comparison to this file")
    p.set_defaults(func=cmd_simulate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DatasetParseError as exc:
        print(f"packbench: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"packbench: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"packbench: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
