"""Command-line entry points.

    logrep synth --out-prefix data/demo --sessions 500 --seed 13
    logrep parse --config grid.yaml
    logrep run --config grid.yaml --parsing on
    logrep report --config grid.yaml
    logrep rank --config grid.yaml --alpha 0.05
    logrep plotdata --config grid.yaml --matrix out/matrix_demo_parsed_mcv_none_test.csv

Exit codes: 0 success, 2 configuration/usage problem, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import report as report_mod
from .config import apply_overrides, load_config
from .errors import ConfigError, LogrepError
from .ranking import format_rank_report, observations_from_results, sk_esd
from .represent import load_matrix
from .runner import parse_datasets, run_experiment
from .synth import SynthSpec, generate_synthetic

log = logging.getLogger("logrep")


def _common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="PATH", help="experiment config file")
    parser.add_argument("--seed", type=int, metavar="N", help="override the global seed")
    parser.add_argument("--out", metavar="DIR", help="override the output directory")
    parser.add_argument("--verbose", action="store_true", help="debug logging")


def _load(args: argparse.Namespace):
    if not args.config:
        raise ConfigError("this command needs --config PATH")
    config = load_config(args.config)
    return apply_overrides(config, seed=args.seed, output_dir=args.out)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="logrep",
        description="Benchmark log representations for anomaly detection.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", help="parse configured datasets into template stores")
    _common_flags(p)
    p.add_argument("--dataset", metavar="NAME", help="parse only this dataset")

    p = sub.add_parser("synth", help="generate a labelled synthetic corpus")
    _common_flags(p)
    p.add_argument("--out-prefix", required=True, metavar="PATH")
    p.add_argument("--templates", type=int, default=12, metavar="N")
    p.add_argument("--lines", type=int, metavar="N", help="stop after N lines")
    p.add_argument("--sessions", type=int, metavar="N", help="generate N sessions")
    p.add_argument("--session-min", type=int, default=5, metavar="N")
    p.add_argument("--session-max", type=int, default=30, metavar="N")
    p.add_argument(
        "--pattern",
        choices=["template-presence", "burst-count"],
        default="template-presence",
    )
    p.add_argument("--rate", type=float, default=0.1, metavar="R")

    p = sub.add_parser("run", help="execute the experiment grid")
    _common_flags(p)
    p.add_argument("--parsing", choices=["on", "off"], help="template parsing toggle")
    p.add_argument("--aggregation", choices=["mean", "tfidf"])
    p.add_argument("--window", type=int, metavar="N")
    p.add_argument("--stride", type=int, metavar="N")

    p = sub.add_parser("report", help="render results into markdown + CSV tables")
    _common_flags(p)
    p.add_argument("--results", metavar="PATH", help="results file (default <out>/results.csv)")

    p = sub.add_parser("rank", help="cluster techniques into distinct rank groups")
    _common_flags(p)
    p.add_argument("--results", metavar="PATH")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--effect", type=float, default=0.2, help="negligible-effect cutoff")

    p = sub.add_parser("plotdata", help="emit plot-input CSV series")
    _common_flags(p)
    p.add_argument("--results", metavar="PATH")
    p.add_argument("--matrix", metavar="PATH", help="matrix export to sample for a scatter file")
    p.add_argument("--per-class", type=int, default=200, metavar="N")
    return parser


def _results_path(args: argparse.Namespace, out_dir: Path) -> Path:
    if args.results:
        return Path(args.results)
    return out_dir / "results.csv"


def _cmd_parse(args) -> int:
    config = _load(args)
    parse_datasets(config, only=args.dataset)
    return 0


def _cmd_synth(args) -> int:
    spec = SynthSpec(
        n_templates=args.templates,
        n_lines=args.lines,
        n_sessions=args.sessions,
        session_length=(args.session_min, args.session_max),
        anomaly_pattern=args.pattern,
        anomaly_rate=args.rate,
        seed=args.seed if args.seed is not None else 0,
    )
    result = generate_synthetic(spec, args.out_prefix)
    print(
        f"wrote {result.n_lines} lines, {result.n_sessions} sessions "
        f"({result.n_anomalous} anomalous) to {result.log_path}"
    )
    print(f"templates: {result.templates_path}")
    print(f"labels:    {result.labels_path}")
    print(f"truth:     {result.truth_path}")
    return 0


def _cmd_run(args) -> int:
    config = _load(args)
    apply_overrides(
        config,
        parsing=args.parsing,
        aggregation=args.aggregation,
        window=args.window,
        stride=args.stride,
    )
    results = run_experiment(config)
    print(f"results: {results}")
    return 0


def _cmd_report(args) -> int:
    config = _load(args)
    out_dir = Path(config.output_dir)
    rows = report_mod.read_results(_results_path(args, out_dir))
    out_md = out_dir / "report.md"
    report_mod.emit_report(rows, out_md)
    print(f"report: {out_md} and {out_md.with_suffix('.csv')}")
    return 0


def _cmd_rank(args) -> int:
    config = _load(args)
    out_dir = Path(config.output_dir)
    rows = report_mod.read_results(_results_path(args, out_dir))
    samples = observations_from_results(rows)
    if not samples:
        raise ConfigError(
            "results contain no context with two or more representations; "
            "nothing to rank"
        )
    groups = sk_esd(samples, alpha=args.alpha, effect_threshold=args.effect)
    text = format_rank_report(groups, {name: len(obs) for name, obs in samples.items()})
    out_path = out_dir / "ranking.txt"
    out_path.write_text(text, encoding="utf-8")
    print(text, end="")
    print(f"ranking: {out_path}")
    return 0


def _cmd_plotdata(args) -> int:
    config = _load(args)
    out_dir = Path(config.output_dir)
    rows = report_mod.read_results(_results_path(args, out_dir))
    n_sweep = report_mod.emit_window_sweep(rows, out_dir / "sweep.csv")
    n_pairs = report_mod.emit_parsing_pairs(rows, out_dir / "parsing_pairs.csv")
    print(f"sweep points: {n_sweep} -> {out_dir / 'sweep.csv'}")
    print(f"parsed/unparsed pairs: {n_pairs} -> {out_dir / 'parsing_pairs.csv'}")
    if args.matrix:
        matrix = load_matrix(args.matrix)
        n_rows = report_mod.emit_scatter_sample(
            matrix,
            out_dir / "scatter.csv",
            seed=config.seed,
            per_class=args.per_class,
        )
        print(f"scatter rows: {n_rows} -> {out_dir / 'scatter.csv'}")
    return 0


_COMMANDS = {
    "parse": _cmd_parse,
    "synth": _cmd_synth,
    "run": _cmd_run,
    "report": _cmd_report,
    "rank": _cmd_rank,
    "plotdata": _cmd_plotdata,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except LogrepError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
