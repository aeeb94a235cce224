"""Command-line entry point: ``faultvote {simulate,calibrate,identify,report}``.

Exit codes: 0 on success, 2 for configuration or usage errors, 1 when a
stage fails. Diagnostics go to stderr prefixed with the stage name.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import pipeline
from .config import ConfigError, PipelineConfig, config_from_dict, load_config

logger = logging.getLogger("faultvote")

EXIT_OK = 0
EXIT_STAGE = 1
EXIT_CONFIG = 2


def _u64(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="pipeline config JSON (defaults if omitted)")
    common.add_argument("--seed", type=_u64, help="master seed, overrides config.seed")
    common.add_argument("--out", type=Path, help="output directory, overrides config.output_dir")
    common.add_argument("--threads", type=_positive_int, default=1,
                        help="worker processes for calibration and annealing runs")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(
        prog="faultvote",
        description="Fault identification with GP response surfaces, epsilon-dominance "
                    "annealing and ensemble voting.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common],
                       help="simulate training data and (in truth mode) a measurement file")
    p.add_argument("--training-only", action="store_true",
                   help="skip the measurement file; no truth spec needed")

    p = sub.add_parser("calibrate", parents=[common], help="fit one GP surface per frequency")
    p.add_argument("--training", type=Path, help="training CSV (default: OUT/training.csv)")

    p = sub.add_parser("identify", parents=[common],
                       help="run the annealing ensemble and write archives and tallies")
    p.add_argument("--surfaces", type=Path, help="surface directory (default: OUT/surfaces)")
    p.add_argument("--measurements", type=Path,
                   help="measurement CSV (default: OUT/measurements.csv)")

    p = sub.add_parser("report", parents=[common], help="write top-k tables and a score grid")
    p.add_argument("--tallies", type=Path, help="tally directory (default: OUT/tallies)")
    p.add_argument("--top-k", type=_positive_int, help="rows per panel, overrides config.report.top_k")
    return parser


def _resolve_config(args) -> tuple[PipelineConfig, Path]:
    cfg = load_config(args.config) if args.config else config_from_dict({})
    if args.seed is not None:
        cfg.seed = args.seed
    out = args.out if args.out is not None else Path(cfg.output_dir)
    return cfg, out


def _run(args) -> dict:
    cfg, out = _resolve_config(args)
    if args.command == "simulate":
        return pipeline.cmd_simulate(cfg, out, truth_mode=not args.training_only)
    if args.command == "calibrate":
        return pipeline.cmd_calibrate(cfg, out, args.training, args.threads)
    if args.command == "identify":
        return pipeline.cmd_identify(cfg, out, args.surfaces, args.measurements, args.threads)
    return pipeline.cmd_report(cfg, out, args.tallies, args.top_k)


def _print_validation(ranks: dict) -> None:
    for name, r in ranks.items():
        print(f"[identify] truth rank in {name}: key {r['key_rank']}, segment {r['segment_rank']}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    stage = args.command
    try:
        result = _run(args)
    except ConfigError as exc:
        print(f"[{stage}] config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except pipeline.StageError as exc:
        print(f"[{exc.stage}] error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except (OSError, ValueError, ArithmeticError) as exc:
        print(f"[{stage}] error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_STAGE
    if "validation" in result:
        _print_validation(result.pop("validation"))
    print(f"[{stage}] ok: " + json.dumps({k: str(v) if isinstance(v, Path) else v
                                          for k, v in result.items()}))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
