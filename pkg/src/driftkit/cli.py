"""Command-line entry point: ``driftkit {bound,simulate,verify,oracle,counterexamples}``.

Exit codes: 0 success, 1 usage, 2 config, 3 runtime, 4 counterexample failed.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .errors import DriftkitError, ParseError, ValidationError
from .experiment import (ExperimentConfig, bound_report, load_config, oracle_report, render,
                         run_counterexamples, run_experiment, simulate_report)

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_RUNTIME, EXIT_COUNTEREXAMPLE = 0, 1, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="experiment config file")
    common.add_argument("--seed", type=int, help="override simulation.seed")
    common.add_argument("--trials", type=int, help="override simulation.trials")
    common.add_argument("--format", choices=("json", "csv"), help="report format")
    common.add_argument("--out", metavar="PATH", help="write the report here instead of stdout")
    common.add_argument("--dump-paths", action="store_true",
                        help="write recorded paths as CSV next to the report")

    parser = _Parser(prog="driftkit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"driftkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("bound", parents=[common], help="closed-form bounds only")
    sub.add_parser("simulate", parents=[common], help="Monte Carlo estimate only")
    sub.add_parser("verify", parents=[common], help="bounds, simulation, checks and oracle")
    sub.add_parser("oracle", parents=[common], help="exact finite-chain solve only")
    sub.add_parser("counterexamples", parents=[common], help="run the three counterexamples")
    return parser


def _apply_overrides(config: ExperimentConfig, args) -> ExperimentConfig:
    sim, out = config.simulation, config.outputs
    if args.seed is not None:
        sim = replace(sim, master_seed=args.seed)
    if args.trials is not None:
        sim = replace(sim, trials=args.trials)
    if args.dump_paths:
        out = replace(out, dump_paths=True)
    if out.dump_paths:
        sim = replace(sim, record_paths=True)
    if args.format is not None:
        out = replace(out, format=args.format)
    if args.out is not None:
        out = replace(out, report_path=args.out)
    config = replace(config, simulation=sim, outputs=out)
    config.validate()
    return config


def _paths_file(report_path: str | None) -> Path:
    return Path(report_path).with_suffix(".paths.csv") if report_path else Path("paths.csv")


def _emit(text: str, path: str | None) -> None:
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _counterexamples(args) -> int:
    kw = {}
    if args.trials is not None:
        kw["trials"] = args.trials
    if args.seed is not None:
        kw["seed"] = args.seed
    results = run_counterexamples(**kw)
    lines = [f"{'example':<28} | {'expected':<56} | observed"]
    for r in results:
        mark = "PASS" if r.passed else "FAIL"
        lines.append(f"{r.name:<28} | {r.expected:<56} | {r.observed} [{mark}]")
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK if all(r.passed for r in results) else EXIT_COUNTEREXAMPLE


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        if args.command == "counterexamples":
            return _counterexamples(args)
        if not args.config:
            parser.error(f"{args.command} requires --config PATH")
        config = _apply_overrides(load_config(args.config), args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except (ParseError, ValidationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DriftkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    try:
        batch = None
        if args.command == "bound":
            report = bound_report(config)
        elif args.command == "simulate":
            report, batch = simulate_report(config)
        elif args.command == "oracle":
            report = oracle_report(config)
        else:
            report, batch = run_experiment(config)
        for w in report.warnings:
            print(f"warning: {w}", file=sys.stderr)
        _emit(render(report, config.outputs.format), config.outputs.report_path)
        if config.outputs.dump_paths and batch is not None:
            batch.dump_csv(_paths_file(config.outputs.report_path))
    except (DriftkitError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
