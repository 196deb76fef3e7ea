"""
Command-line entry point ``ocms-ldp``.

Subcommands:

* ``datagen``  materialise the configured dataset
* ``run``      run an experiment and write its result files
* ``analyze``  recompute the summary of a finished run
* ``tables``   print closed-form precision and communication cost as CSV
* ``encode``   turn a dataset file into OCMS+RR client reports
* ``estimate`` estimate frequencies from a report file
"""

import argparse
import csv
import dataclasses
import logging
import sys
from collections.abc import Sequence
from contextlib import nullcontext
from pathlib import Path

import numpy as np

import ocms._constants as consts
from .analysis import Algorithm
from .cms import EstimatorMode, EstimatorParams, client_encode_batch, server_estimate
from .codec import pack_reports, read_reports_csv, unpack_reports, write_reports_csv
from .config import ExperimentConfig
from .datasets import load_dataset
from .exceptions import CodecError, ConfigurationError, DatasetError, DomainError
from .runner import analyze, datagen, run, tables, write_tables_csv

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_IO = 1
EXIT_CONFIG = 2


def _load_config(args: argparse.Namespace) -> ExperimentConfig:
    config = ExperimentConfig.from_json(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["output_dir"] = args.out
    if getattr(args, "workers", None) is not None:
        overrides["workers"] = args.workers
    return dataclasses.replace(config, **overrides) if overrides else config


def _estimator_params(args: argparse.Namespace, d: int, clip: bool = False) -> EstimatorParams:
    mode = EstimatorMode(args.mode)
    return EstimatorParams.create(epsilon=args.epsilon, d=d, mode=mode, f_star=args.f_star, clip=clip)


def _cmd_datagen(args: argparse.Namespace) -> int:
    path = datagen(_load_config(args))
    print(path)
    return EXIT_OK


def _cmd_run(args: argparse.Namespace) -> int:
    result = run(_load_config(args))
    print(result.out_dir)
    return EXIT_OK


def _cmd_analyze(args: argparse.Namespace) -> int:
    analyze(args.out)
    print(Path(args.out) / "summary.csv")
    return EXIT_OK


def _cmd_tables(args: argparse.Namespace) -> int:
    algorithms = [Algorithm.parse(label) for label in args.algorithms] if args.algorithms else None
    write_tables_csv(sys.stdout, tables(args.d, args.epsilons, args.n, algorithms))
    return EXIT_OK


def _cmd_encode(args: argparse.Namespace) -> int:
    dataset = load_dataset(args.dataset)
    params = _estimator_params(args, dataset.d)
    rng = np.random.default_rng(args.seed)
    reports = client_encode_batch(dataset.values, params, rng)
    if args.packed:
        Path(args.out).write_bytes(pack_reports(reports))
    else:
        write_reports_csv(args.out, reports)
    logger.info("Encoded %d values with m=%d", dataset.n, params.m)
    return EXIT_OK


def _cmd_estimate(args: argparse.Namespace) -> int:
    params = _estimator_params(args, args.d, clip=args.clip)
    path = Path(args.reports)
    reports = unpack_reports(path.read_bytes()) if args.packed else read_reports_csv(path)
    x_set = args.x if args.x else range(args.d)
    estimates = server_estimate(x_set, reports, params)
    with open(args.out, "w", newline="", encoding="utf-8") if args.out else nullcontext(sys.stdout) as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(("x", "estimate"))
        writer.writerows(estimates.as_dict().items())
    return EXIT_OK


def _add_experiment_flags(parser: argparse.ArgumentParser, workers: bool = False) -> None:
    parser.add_argument("--config", required=True, type=Path, help="flat JSON experiment configuration")
    parser.add_argument("--seed", type=int, help="override the configured seed")
    parser.add_argument("--out", type=Path, help="override the configured output directory")
    if workers:
        parser.add_argument("--workers", type=int, help="size of the trial thread pool")


def _add_estimator_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--epsilon", type=float, required=True, help="privacy factor")
    parser.add_argument(
        "--mode",
        choices=[EstimatorMode.MSE_OPT.value, EstimatorMode.L_OPT.value],
        default=EstimatorMode.MSE_OPT.value,
        help="optimise the hash range for worst-case MSE or for the l1/l2 losses",
    )
    parser.add_argument("--f-star", type=float, default=1.0, help="prior upper bound on any frequency")
    parser.add_argument("--packed", action="store_true", help="use 20-byte binary records instead of CSV")


def build_parser() -> argparse.ArgumentParser:
    """Build the ocms-ldp argument parser with every subcommand."""
    parser = argparse.ArgumentParser(prog="ocms-ldp", description="Locally private frequency estimation experiments")
    parser.add_argument(
        "--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"], help="logging threshold"
    )
    commands = parser.add_subparsers(dest="command", required=True)

    datagen_parser = commands.add_parser("datagen", help="materialise the configured dataset")
    _add_experiment_flags(datagen_parser)
    datagen_parser.set_defaults(handler=_cmd_datagen)

    run_parser = commands.add_parser("run", help="run an experiment")
    _add_experiment_flags(run_parser, workers=True)
    run_parser.set_defaults(handler=_cmd_run)

    analyze_parser = commands.add_parser("analyze", help="recompute the summary of a finished run")
    analyze_parser.add_argument("--out", required=True, type=Path, help="directory of a finished run")
    analyze_parser.set_defaults(handler=_cmd_analyze)

    tables_parser = commands.add_parser("tables", help="closed-form precision and communication cost")
    tables_parser.add_argument("--d", type=int, required=True, help="dictionary size")
    tables_parser.add_argument("--n", type=int, required=True, help="number of clients")
    tables_parser.add_argument(
        "--epsilons", type=float, nargs="+", default=list(consts.DEFAULT_EPSILONS), help="privacy factors"
    )
    tables_parser.add_argument("--algorithms", nargs="+", help="algorithm labels (default: all)")
    tables_parser.set_defaults(handler=_cmd_tables)

    encode_parser = commands.add_parser("encode", help="encode a dataset file into client reports")
    encode_parser.add_argument("--dataset", type=Path, required=True, help="dataset file")
    encode_parser.add_argument("--out", type=Path, required=True, help="report file to write")
    encode_parser.add_argument("--seed", type=int, default=0, help="random seed")
    _add_estimator_flags(encode_parser)
    encode_parser.set_defaults(handler=_cmd_encode)

    estimate_parser = commands.add_parser("estimate", help="estimate frequencies from client reports")
    estimate_parser.add_argument("--reports", type=Path, required=True, help="report file")
    estimate_parser.add_argument("--d", type=int, required=True, help="dictionary size")
    estimate_parser.add_argument("--x", type=int, nargs="+", help="values to estimate (default: all of [0, d))")
    estimate_parser.add_argument("--out", type=Path, help="estimate CSV to write (default: stdout)")
    estimate_parser.add_argument("--no-clip", dest="clip", action="store_false", help="keep estimates outside [0, 1]")
    _add_estimator_flags(estimate_parser)
    estimate_parser.set_defaults(handler=_cmd_estimate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    """
    Parse ``argv`` and dispatch to a subcommand.

    Returns:
        0 on success, 2 for invalid configurations or arguments, 1 for I/O, dataset
        and report-format failures.
    """
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.handler(args)
    except (ConfigurationError, DomainError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (DatasetError, CodecError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
