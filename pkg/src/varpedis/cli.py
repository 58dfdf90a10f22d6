"""Command-line front end.

Three subcommands:

* ``varpedis select``: read a dataset (CSV or VPED, auto-detected), run
  the selection pipeline, write the record-level manifest, print a
  per-class summary table.
* ``varpedis stats``: per-class record counts, similarity summaries, and
  a 20-bin similarity histogram over [-1, 1]; optionally as JSON.
* ``varpedis synth-eval``: generate a synthetic population from a spec
  file, select on it, print the bias report JSON.

Progress and diagnostics go to stderr; machine-readable output goes to
stdout or the file named by --output.  Exit codes: 0 on success, 1 on
runtime errors (unreadable input, malformed files, degenerate data), 2 on
usage errors.  Set VARPEDIS_THREADS to score classes on a thread pool;
results are identical for any value.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from typing import Optional, Sequence

log = logging.getLogger("varpedis")

THREADS_ENV = "VARPEDIS_THREADS"
HISTOGRAM_BINS = 20


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="varpedis",
        description="Deterministic variance-preserving dataset curation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_select = sub.add_parser("select", help="select records and write a manifest")
    p_select.add_argument("--input", required=True, help="dataset file (CSV or VPED)")
    p_select.add_argument("--output", required=True, help="manifest JSONL to write")
    p_select.add_argument("--format", choices=("csv", "vped"), default=None,
                          help="input format (default: auto-detect)")
    _add_selection_flags(p_select)
    p_select.set_defaults(func=cmd_select)

    p_stats = sub.add_parser("stats", help="per-class similarity statistics")
    p_stats.add_argument("--input", required=True, help="dataset file (CSV or VPED)")
    p_stats.add_argument("--format", choices=("csv", "vped"), default=None,
                         help="input format (default: auto-detect)")
    p_stats.add_argument("--json", metavar="PATH", default=None,
                         help="also write the statistics as JSON")
    p_stats.set_defaults(func=cmd_stats)

    p_eval = sub.add_parser("synth-eval", help="bias evaluation on a synthetic population")
    p_eval.add_argument("--spec", required=True, help="population spec JSON")
    p_eval.add_argument("--output", metavar="PATH", default=None,
                        help="also write the bias report JSON")
    _add_selection_flags(p_eval)
    p_eval.set_defaults(func=cmd_synth_eval)
    return parser


def _add_selection_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--theta", type=float, default=0.7,
                   help="similarity threshold in (0, 1] (default 0.7)")
    p.add_argument("--buckets", type=int, default=5,
                   help="number of similarity buckets (default 5)")
    p.add_argument("--min-per-bucket", type=int, default=200,
                   help="minimum records per bucket before repair (default 200)")
    p.add_argument("--per-bucket", type=int, default=200,
                   help="records sampled per bucket (default 200)")
    p.add_argument("--small-class-max", type=int, default=500,
                   help="classes at or below this size pass through (default 500)")
    p.add_argument("--seed", type=int, default=0,
                   help="selection seed, unsigned 64-bit (default 0)")


def _config_from_args(parser: argparse.ArgumentParser, args: argparse.Namespace):
    from varpedis.selection import SelectionConfig

    if not 0.0 < args.theta <= 1.0:
        parser.error(f"--theta must be in (0, 1], got {args.theta}")
    if args.buckets < 1:
        parser.error(f"--buckets must be >= 1, got {args.buckets}")
    if args.min_per_bucket < 1:
        parser.error(f"--min-per-bucket must be >= 1, got {args.min_per_bucket}")
    if args.per_bucket < 1:
        parser.error(f"--per-bucket must be >= 1, got {args.per_bucket}")
    if args.small_class_max < 0:
        parser.error(f"--small-class-max must be >= 0, got {args.small_class_max}")
    if not 0 <= args.seed < 2**64:
        parser.error(f"--seed must be an unsigned 64-bit integer, got {args.seed}")
    return SelectionConfig(
        seed=args.seed,
        theta=args.theta,
        k=args.buckets,
        n_min=args.min_per_bucket,
        n1=args.per_bucket,
        small_class_max=args.small_class_max,
    )


def _thread_count(parser: argparse.ArgumentParser) -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return 1
    try:
        value = int(raw)
    except ValueError:
        parser.error(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    if value < 1:
        parser.error(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return value


def cmd_select(parser: argparse.ArgumentParser, args: argparse.Namespace) -> int:
    from varpedis.selection import select_dataset
    from varpedis.store import SELECTED, ALL_KEPT_SMALL_CLASS, read_dataset, write_manifest

    config = _config_from_args(parser, args)
    workers = _thread_count(parser)
    dataset = read_dataset(args.input, args.format)
    log.info("read %d records in %d classes (dim %d) from %s",
             len(dataset.records), len(dataset.classes), dataset.dim, args.input)
    manifest = select_dataset(dataset, config, max_workers=workers)
    write_manifest(manifest, args.output)
    log.info("wrote manifest to %s", args.output)

    counts: dict[str, dict[str, int]] = {}
    for entry in manifest.entries:
        row = counts.setdefault(entry.label, {"records": 0, "discarded": 0, "selected": 0})
        row["records"] += 1
        if entry.status == "DISCARDED_THRESHOLD":
            row["discarded"] += 1
        elif entry.status in (SELECTED, ALL_KEPT_SMALL_CLASS):
            row["selected"] += 1
    width = max(len("class"), *(len(label) for label in counts))
    print(f"{'class':<{width}}  {'records':>8}  {'discarded':>9}  {'selected':>8}")
    for label in dataset.classes:
        row = counts[label]
        print(f"{label:<{width}}  {row['records']:>8}  {row['discarded']:>9}  {row['selected']:>8}")
    total = {key: sum(row[key] for row in counts.values())
             for key in ("records", "discarded", "selected")}
    print(f"{'total':<{width}}  {total['records']:>8}  {total['discarded']:>9}  {total['selected']:>8}")
    return 0


def class_statistics(dataset) -> dict:
    """Similarity summaries per class, shared by the text and JSON views."""
    from varpedis.similarity import centroid, score_class

    edges = [-1.0 + 2.0 * i / HISTOGRAM_BINS for i in range(HISTOGRAM_BINS + 1)]
    out: dict = {"classes": {}}
    for label, records in dataset.classes.items():
        cent = centroid(records)
        sims = [s.similarity for s in score_class(records, cent)]
        hist = [0] * HISTOGRAM_BINS
        for s in sims:
            b = int((s + 1.0) / 2.0 * HISTOGRAM_BINS)
            hist[min(b, HISTOGRAM_BINS - 1)] += 1
        out["classes"][label] = {
            "count": len(records),
            "min": min(sims),
            "mean": sum(sims) / len(sims),
            "max": max(sims),
            "histogram": hist,
            "bin_edges": edges,
        }
    return out


def cmd_stats(parser: argparse.ArgumentParser, args: argparse.Namespace) -> int:
    from varpedis.store import read_dataset

    dataset = read_dataset(args.input, args.format)
    stats = class_statistics(dataset)
    for label, info in stats["classes"].items():
        print(f"class {label}: {info['count']} records, similarity "
              f"min {info['min']:.6f} mean {info['mean']:.6f} max {info['max']:.6f}")
        peak = max(info["histogram"]) or 1
        for b, count in enumerate(info["histogram"]):
            if count == 0:
                continue
            lo, hi = info["bin_edges"][b], info["bin_edges"][b + 1]
            bar = "#" * max(1, round(40 * count / peak))
            print(f"  [{lo:+.2f}, {hi:+.2f}{']' if b == HISTOGRAM_BINS - 1 else ')'} {bar} {count}")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(stats, fh, indent=2)
            fh.write("\n")
        log.info("wrote statistics to %s", args.json)
    return 0


def cmd_synth_eval(parser: argparse.ArgumentParser, args: argparse.Namespace) -> int:
    from varpedis.bias import evaluate_selection, generate_population, load_population_spec
    from varpedis.selection import select_dataset

    config = _config_from_args(parser, args)
    workers = _thread_count(parser)
    spec = load_population_spec(args.spec)
    dataset, tags = generate_population(spec)
    log.info("generated %d records in %d classes (dim %d)",
             len(dataset.records), len(dataset.classes), dataset.dim)
    manifest = select_dataset(dataset, config, max_workers=workers)
    report = evaluate_selection(manifest, dataset, tags)
    text = report.to_json()
    print(text)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
        log.info("wrote bias report to %s", args.output)
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(parser, args)
    except Exception as exc:  # noqa: BLE001 - single diagnostic line, exit 1
        log.error("error: %s", exc)
        return 1


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
