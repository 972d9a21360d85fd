"""Command line entry point.

Exit codes: 0 success, 2 usage or configuration error (including a missing
dataset root), 3 data error, 4 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .exceptions import (
    AllExcluded,
    ConfigError,
    DataError,
    LabelFormatError,
    MissingFile,
    NonFiniteInput,
    NpyFormatError,
    StageError,
)
from .pipeline import STAGES, PipelineConfig, check_inputs, parse_tau_grid, run_pipeline, run_stage

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 2, 3, 4

_DATA_ERRORS = (DataError, NpyFormatError, LabelFormatError, NonFiniteInput, AllExcluded)

_HELP = {
    "ingest": "load and scale channels",
    "smooth": "adaptive-window smoothing",
    "search": "genetic architecture search and training",
    "predict": "MC-dropout ensemble prediction",
    "detect": "flag anomalous segments",
    "evaluate": "metrics and report",
    "plot": "SVG charts",
    "run": "all stages in order",
}


def _u64(text):
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _tau_grid(text):
    try:
        parse_tau_grid(text)
    except ConfigError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    return text


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON file of dotted config keys")
    common.add_argument("--root", metavar="DIR", help="dataset root (train/, test/, label CSV)")
    common.add_argument("--channel", metavar="ID", action="append",
                        help="channel to process; repeatable (default: all)")
    common.add_argument("--seed", type=_u64, metavar="U64")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--synthetic", action="store_true",
                        help="use the in-tree sine fixture instead of a dataset")
    common.add_argument("--tau-grid", type=_tau_grid, metavar="A..B")
    common.add_argument("--desk-scale", action="store_true",
                        help="shrink search and training bounds to laptop size")
    common.add_argument("--threads", type=int, metavar="N")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any dotted config key; repeatable")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="vge", description="Variance-based genetic "
                                     "ensemble anomaly detection for telemetry channels.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in STAGES + ("run",):
        sub.add_parser(name, parents=[common], help=_HELP[name])
    return parser


def _flag_values(args) -> dict:
    flags = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        flags[key.strip()] = value
    named = {"data.root": args.root, "seed": args.seed, "out": args.out,
             "detect.tau_grid": args.tau_grid, "threads": args.threads,
             "data.channels": args.channel}
    flags.update({k: v for k, v in named.items() if v is not None})
    if args.synthetic:
        flags["data.synthetic"] = True
    return flags


def load_config(args) -> PipelineConfig:
    file_values = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                file_values = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {args.config} is not valid JSON: {exc}") from None
        if not isinstance(file_values, dict):
            raise ConfigError("config file must hold a JSON object")
    return PipelineConfig.build(file_values, _flag_values(args), desk_scale=args.desk_scale,
                                synthetic=args.synthetic)


def _summary(report) -> str:
    lines = []
    for cid, m in report.channels.items():
        lines.append(f"{cid}: f1={m['f1']:.4f} precision={m['precision']:.4f} "
                     f"recall={m['recall']:.4f} tau={m['tau']}")
    if report.aggregate:
        a = report.aggregate
        lines.append(f"aggregate: f1={a['f1']:.4f} accuracy={a['accuracy']:.4f} "
                     f"precision={a['precision']:.4f} recall={a['recall']:.4f}")
    return "\n".join(lines)


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, StageError):
        exc = exc.cause
    if isinstance(exc, ConfigError):
        return EXIT_USAGE
    if isinstance(exc, _DATA_ERRORS):
        return EXIT_DATA
    return EXIT_INTERNAL


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        if args.command in ("run", "ingest"):
            try:
                check_inputs(cfg)
            except MissingFile as exc:
                print(f"vge: MissingFile: {exc}", file=sys.stderr)
                return EXIT_USAGE
        if args.command == "run":
            report = run_pipeline(cfg)
        else:
            report = run_stage(args.command, cfg)
        if args.command in ("run", "evaluate"):
            print(_summary(report))
        return EXIT_OK
    except Exception as exc:  # noqa: BLE001 - mapped to exit codes
        code = _exit_code(exc)
        print(f"vge: {type(exc).__name__}: {exc}", file=sys.stderr)
        if code == EXIT_INTERNAL:
            logging.getLogger(__name__).debug("internal error", exc_info=True)
        return code


if __name__ == "__main__":
    sys.exit(main())
