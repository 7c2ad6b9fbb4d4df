"""Command-line interface.

One subcommand per pipeline stage plus `pipeline` for the whole run.
Exit codes: 0 success, 1 usage error, 2 data error, 3 non-convergence.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import pipeline
from .errors import ConvergenceError


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad flags; we reserve 2 for data errors
    def error(self, message):
        raise UsageError(message)


def _add_out(p):
    p.add_argument("--out", required=True, type=Path, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="btcgraph", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", help="decode raw block files into transaction tables")
    p.add_argument("--blocks", required=True, type=Path, help="directory of raw block files")
    _add_out(p)

    p = sub.add_parser("cluster", help="cluster addresses and tally reuse")
    p.add_argument("--parsed", required=True, type=Path, help="directory with parse-stage tables")
    _add_out(p)

    p = sub.add_parser("graph", help="build the canonical user edge list")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--parsed", type=Path, help="directory with parse-stage tables")
    src.add_argument("--edge-list", type=Path, help="pre-clustered edge-list CSV")
    p.add_argument("--clustering", type=Path, help="clustering CSV (with --parsed)")
    p.add_argument("--skip-bad-rows", action="store_true",
                   help="skip malformed edge-list rows instead of failing")
    p.add_argument("--cache", type=Path, help="also write a binary graph cache")
    _add_out(p)

    p = sub.add_parser("nullmodel", help="derive significance thresholds from an ER null model")
    p.add_argument("--edges", required=True, type=Path)
    p.add_argument("--p-value", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    _add_out(p)

    p = sub.add_parser("classify", help="label users against the thresholds")
    p.add_argument("--edges", required=True, type=Path)
    p.add_argument("--thresholds", required=True, type=Path)
    _add_out(p)

    p = sub.add_parser("timeseries", help="active-population series and customer/seller ratio")
    p.add_argument("--edges", required=True, type=Path)
    p.add_argument("--roles", required=True, type=Path)
    p.add_argument("--grid-step-days", type=float, default=14.0)
    _add_out(p)

    p = sub.add_parser("centrality", help="PageRank and HITS scores")
    p.add_argument("--edges", required=True, type=Path)
    p.add_argument("--damping", type=float, default=0.85)
    p.add_argument("--tolerance", type=float, default=1e-10)
    p.add_argument("--max-iterations", type=int, default=200)
    p.add_argument("--hits-max-iterations", type=int, default=1000)
    p.add_argument("--value-weighted", action="store_true")
    _add_out(p)

    p = sub.add_parser("report", help="distribution fit and correlation summaries")
    p.add_argument("--price", type=Path, help="price series CSV (date_iso8601,value)")
    p.add_argument("--difficulty", type=Path, help="difficulty series CSV")
    p.add_argument("--r-min", type=int, default=1)
    _add_out(p)

    p = sub.add_parser("pipeline", help="run every stage in order")
    p.add_argument("--config", type=Path, help="key=value config file")
    p.add_argument("--blocks", type=Path)
    p.add_argument("--edge-list", type=Path)
    p.add_argument("--out", type=Path)
    p.add_argument("--p-value", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--grid-step-days", type=float)
    p.add_argument("--damping", type=float)
    p.add_argument("--tolerance", type=float)
    p.add_argument("--max-iterations", type=int)
    p.add_argument("--hits-max-iterations", type=int)
    p.add_argument("--r-min", type=int)
    p.add_argument("--skip-bad-rows", action="store_true")
    p.add_argument("--value-weighted", action="store_true")
    p.add_argument("--price", type=Path)
    p.add_argument("--difficulty", type=Path)

    return parser


def _pipeline_config(args) -> pipeline.PipelineConfig:
    values: dict = {}
    if args.config is not None:
        if not args.config.is_file():
            raise UsageError(f"config file {args.config} does not exist")
        values.update(pipeline.parse_config_file(args.config))
    overrides = {
        "blocks_dir": args.blocks,
        "edge_list": args.edge_list,
        "output_dir": args.out,
        "p_value": args.p_value,
        "seed": args.seed,
        "grid_step_days": args.grid_step_days,
        "damping": args.damping,
        "tolerance": args.tolerance,
        "max_iterations": args.max_iterations,
        "hits_max_iterations": args.hits_max_iterations,
        "r_min": args.r_min,
        "price_series": args.price,
        "difficulty_series": args.difficulty,
    }
    if args.skip_bad_rows:
        overrides["strict_ingest"] = False
    if args.value_weighted:
        overrides["value_weighted"] = True
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return pipeline.config_from_mapping(values)
    except (ValueError, KeyError) as exc:
        raise UsageError(str(exc)) from exc


def _dispatch(args) -> None:
    cmd = args.command
    if cmd == "parse":
        pipeline.stage_parse(args.blocks, args.out)
    elif cmd == "cluster":
        pipeline.stage_cluster(args.parsed, args.out)
    elif cmd == "graph":
        if args.parsed is not None:
            if args.clustering is None:
                raise UsageError("--parsed requires --clustering")
            pipeline.stage_graph_from_parsed(args.parsed, args.clustering, args.out)
        else:
            rejects = pipeline.stage_graph_from_edge_list(
                args.edge_list, args.out, strict=not args.skip_bad_rows
            )
            for line, reason in rejects:
                print(f"skipped line {line}: {reason}", file=sys.stderr)
        if args.cache is not None:
            pipeline.load_graph(Path(args.out) / pipeline.EDGES_FILE).save(args.cache)
    elif cmd == "nullmodel":
        pipeline.stage_nullmodel(args.edges, args.p_value, args.seed, args.out)
    elif cmd == "classify":
        pipeline.stage_classify(args.edges, args.thresholds, args.out)
    elif cmd == "timeseries":
        pipeline.stage_timeseries(args.edges, args.roles, args.grid_step_days, args.out)
    elif cmd == "centrality":
        pipeline.stage_centrality(
            args.edges,
            args.out,
            damping=args.damping,
            tolerance=args.tolerance,
            max_iterations=args.max_iterations,
            hits_max_iterations=args.hits_max_iterations,
            value_weighted=args.value_weighted,
        )
    elif cmd == "report":
        pipeline.stage_report(
            args.out, price_path=args.price, difficulty_path=args.difficulty, r_min=args.r_min
        )
    elif cmd == "pipeline":
        config = _pipeline_config(args)
        reports = pipeline.run_pipeline(config)
        for path in reports:
            print(path)
    else:  # pragma: no cover - argparse enforces the choices
        raise UsageError(f"unknown command {cmd!r}")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _dispatch(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except ConvergenceError as exc:
        print(f"non-convergence: {exc}", file=sys.stderr)
        return 3
    except (ValueError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
