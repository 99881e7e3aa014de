"""Command-line entry point: ``mda-impute <command> --config run.ini``."""

import argparse
import sys
from pathlib import Path

from mda_impute.config import Config
from mda_impute.errors import MdaError
from mda_impute.logging_config import configure_logging, get_logger
from mda_impute.pipeline import (
    analyze,
    bench,
    fit,
    impute,
    load_data,
    read_completed,
    run,
    validate,
    write_manifest,
)
from mda_impute.run_config import RunConfig, load_run_config

logger = get_logger(__name__)


def create_parser() -> argparse.ArgumentParser:
    """Create the command line argument parser."""
    parser = argparse.ArgumentParser(
        description="Bayesian multiple imputation for longitudinal trials",
        prog="mda-impute",
    )
    parser.add_argument(
        "--log-level",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        default=None,
        help="Logging level (default: LOG_LEVEL or INFO)",
    )

    subparsers = parser.add_subparsers(dest="command", help="Available commands", required=True)

    def add_command(name: str, help_text: str) -> argparse.ArgumentParser:
        command = subparsers.add_parser(name, help=help_text)
        command.add_argument("--config", type=Path, required=True, help="Run file (INI) or manifest")
        command.add_argument("--seed", type=int, default=None, help="Overrides chain.seed")
        command.add_argument("--out", type=Path, default=None, help="Overrides output.directory")
        return command

    add_command("fit", "Run the chains and write draws and diagnostics")
    add_command("impute", "Fit and write the completed datasets")
    analyze_parser = add_command("analyze", "Impute and combine the endpoint with Rubin's rules")
    analyze_parser.add_argument(
        "--completed",
        type=Path,
        default=None,
        help="Analyze existing imputation_*.csv files instead of fitting",
    )
    add_command("validate", "Check data and prior without sampling")
    add_command("bench", "Compare the MDA and FDA chains")
    return parser


def _dispatch(args: argparse.Namespace, config: RunConfig) -> int:
    out = config.output.directory
    if args.command == "fit":
        outcome = fit(config)
        write_manifest(config, "fit", outcome.artifacts)
        print(f"Wrote {len(outcome.chains)} chain(s) to {out}")
        return 0

    if args.command == "impute":
        outcome, completed = impute(config)
        write_manifest(config, "impute", outcome.artifacts)
        print(f"Wrote {len(completed)} completed datasets to {out / 'completed'}")
        return 0

    if args.command == "analyze":
        if args.completed is not None:
            data = load_data(config)
            result = analyze(config, completed=read_completed(data, args.completed), data=data)
            write_manifest(config, "analyze", [out / "mi_result.json"])
        else:
            result = run(config)
        df = "inf" if result.df == float("inf") else f"{result.df:.1f}"
        print(f"estimate {result.point:.6g}  se {result.se:.6g}  df {df}  m {result.m}")
        return 0

    if args.command == "validate":
        report = validate(config)
        print(report.format_table())
        return 0 if report.ok else 1

    report = bench(config)
    print(report.format_table())
    return 0


def main() -> None:
    """Main entry point."""
    parser = create_parser()
    args = parser.parse_args()
    configure_logging(
        log_level=args.log_level,
        log_format=Config.LOG_FORMAT,
        log_file=Config.LOG_FILE,
        json_logs=Config.LOG_JSON,
    )

    try:
        config = load_run_config(args.config, seed=args.seed, out=args.out)
        code = _dispatch(args, config)
    except MdaError as e:
        print(f"Error: {e}", file=sys.stderr)
        sys.exit(e.exit_code)
    except KeyboardInterrupt:
        logger.info("Interrupted")
        sys.exit(130)
    sys.exit(code)


def run_cli() -> None:
    """Entry point for the console script."""
    main()


if __name__ == "__main__":
    main()
