"""Command-line entry point: ``lowrank-pricing {run, rank-analysis, print-config}``.

Exit codes: 0 on success, 2 for malformed input (config or matrix CSV),
3 when a run produces NaN.
"""

import argparse
import csv
import dataclasses
import logging
import os
import sys

import numpy as np

from .config import ConfigError, config_items, dump_config, load_config
from .harness import RunDiverged, aggregate, run_experiment, variance_explained

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_DIVERGED = 3


class MatrixError(ValueError):
    pass


def _f(x):
    return repr(float(x))


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def read_matrix_csv(path, header=False):
    """Read a numeric matrix, reporting the 1-based row and column of bad cells."""
    rows = []
    width = None
    with open(path, newline="", encoding="utf-8") as fh:
        for i, row in enumerate(csv.reader(fh), start=1):
            if header and i == 1:
                continue
            if not row or all(not c.strip() for c in row):
                continue
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise MatrixError(f"{path}: row {i} has {len(row)} columns, expected {width}")
            vals = []
            for j, cell in enumerate(row, start=1):
                try:
                    v = float(cell)
                except ValueError:
                    raise MatrixError(f"{path}: row {i}, column {j}: non-numeric cell {cell!r}") from None
                if not np.isfinite(v):
                    raise MatrixError(f"{path}: row {i}, column {j}: non-finite cell {cell!r}")
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise MatrixError(f"{path}: no data rows")
    return np.array(rows)


def cmd_run(args):
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = dataclasses.replace(cfg, master_seed=args.seed)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        results = run_experiment(cfg, threads=args.threads)
    except RunDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED

    os.makedirs(args.output, exist_ok=True)
    manifest = list(config_items(cfg))
    manifest.append(("seed_override", "none" if args.seed is None else str(args.seed)))
    manifest.append(("threads", str(args.threads)))
    for label, outcomes in results.items():
        summary = aggregate([o.curve for o in outcomes])
        _write_csv(
            os.path.join(args.output, f"regret_{label}.csv"),
            ["round", "mean_cum_regret", "sd_cum_regret"],
            ([t + 1, _f(m), _f(s)] for t, (m, s) in enumerate(zip(summary.mean, summary.sd))),
        )
        for o in outcomes:
            c = o.curve
            _write_csv(
                os.path.join(args.output, f"rounds_{label}_{o.repetition}.csv"),
                ["round", "cum_regret", "instantaneous_regret", "realized_revenue"],
                ([t + 1, _f(cum), _f(inst), _f(rev)]
                 for t, (cum, inst, rev) in enumerate(zip(c.cumulative, c.instantaneous, o.realized_revenue))),
            )
            prefix = f"run.{label}.{o.repetition}"
            manifest.extend((f"{prefix}.seed.{k}", str(v)) for k, v in o.seeds.items())
            manifest.extend((f"{prefix}.hyper.{k}", _f(v) if k != "d" else str(v)) for k, v in o.hyperparams.items())
            manifest.append((f"{prefix}.optimal_value", _f(c.optimal_value)))
            manifest.append((f"{prefix}.optimal_price_norm", _f(np.linalg.norm(c.optimal_price))))
            manifest.append((f"{prefix}.optimum_heuristic", "true" if c.heuristic else "false"))
        print(f"{label}: mean final cumulative regret {summary.mean[-1]:.6g} (sd {summary.sd[-1]:.6g})")
    _write_csv(os.path.join(args.output, "manifest.csv"), ["key", "value"], manifest)
    return EXIT_OK


def cmd_rank_analysis(args):
    try:
        q = read_matrix_csv(args.matrix, header=args.header)
        fractions = variance_explained(q, args.k_max)
    except (MatrixError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        print(f"error: {args.matrix}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    rows = [[k, _f(v)] for k, v in enumerate(fractions, start=1)]
    os.makedirs(args.output, exist_ok=True)
    _write_csv(os.path.join(args.output, "rank_analysis.csv"), ["k", "variance_explained_fraction"], rows)
    print("k,variance_explained_fraction")
    for k, v in rows:
        print(f"{k},{v}")
    return EXIT_OK


def cmd_print_config(args):
    try:
        cfg = load_config(args.config)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    sys.stdout.write(dump_config(cfg))
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="lowrank-pricing", description="Low-rank bandit pricing experiments.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-run progress")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment grid and write regret CSVs")
    run.add_argument("config", help="experiment config (INI)")
    run.add_argument("-o", "--output", required=True, help="output directory (created if absent)")
    run.add_argument("--seed", type=int, default=None, help="override the master seed")
    run.add_argument("--threads", type=int, default=1, help="worker processes (default 1)")
    run.set_defaults(func=cmd_run)

    rank = sub.add_parser("rank-analysis", help="variance explained by the top-k singular vectors")
    rank.add_argument("matrix", help="CSV with N rows and T numeric columns")
    rank.add_argument("--k-max", type=int, required=True)
    rank.add_argument("--header", action="store_true", help="skip the first row")
    rank.add_argument("-o", "--output", required=True, help="output directory (created if absent)")
    rank.set_defaults(func=cmd_rank_analysis)

    show = sub.add_parser("print-config", help="echo the fully resolved config")
    show.add_argument("config")
    show.set_defaults(func=cmd_print_config)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "threads", 1) is not None and getattr(args, "threads", 1) < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_INPUT
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
