import argparse
import sys
from pathlib import Path

from loguru import logger
from pydantic import ValidationError

from latent_brain_decoding.errors import DecodingError
from latent_brain_decoding.io_utils import load_run_config
from latent_brain_decoding.logging_utils import setup_logging
from latent_brain_decoding.scripts import (
    codec,
    decode_run,
    evaluate,
    significance,
    simulate,
    voxels,
)

COMMAND_MODULES = (simulate, codec, decode_run, voxels, evaluate, significance)


def build_parser() -> argparse.ArgumentParser:
    """
    Build the `lbd` parser.

    Every subcommand shares --config, --seed, --out and --log-level through
    a parent parser; command modules register themselves via
    `add_parsers(subparsers, parent)`.

    Returns
    -------
    argparse.ArgumentParser
        Parser whose namespaces carry the selected `handler`.
    """

    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument(
        "--config",
        type=Path,
        default=None,
        help="TOML run configuration (defaults for every missing key)",
    )
    parent.add_argument(
        "--seed",
        type=int,
        default=None,
        help="Overrides both stats.seed and sim.seed",
    )
    parent.add_argument(
        "--out",
        type=Path,
        default=Path("."),
        help="Output directory (created if missing)",
    )
    parent.add_argument(
        "--log-level",
        default="WARNING",
        choices=["DEBUG", "INFO", "SUCCESS", "WARNING", "ERROR"],
    )

    parser = argparse.ArgumentParser(
        prog="lbd",
        description="Linear brain decoding of latent face codes.",
    )
    subparsers = parser.add_subparsers(
        dest="command", metavar="COMMAND", required=True
    )
    for module in COMMAND_MODULES:
        module.add_parsers(subparsers, parent)

    return parser


def main(argv: list[str] | None = None) -> int:
    """
    Entry point of the `lbd` command.

    Returns
    -------
    int
        Exit code:
        - 0 on success
        - 1 on data, validation or missing-file errors, reported as one
          `error: ...` line on stderr
        - 2 on usage errors (raised by argparse as SystemExit)
    """

    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)

    try:
        run_config = load_run_config(args.config)
        if args.seed is not None:
            run_config = run_config.with_seed(args.seed)

        args.out.mkdir(parents=True, exist_ok=True)
        logger.info(f"Running '{args.command}' into {args.out}")
        args.handler(args, run_config)

    except (DecodingError, FileNotFoundError, ValidationError) as e:
        logger.debug(f"'{args.command}' failed: {e!r}")
        message = " ".join(str(e).split())
        print(f"error: {message}", file=sys.stderr)
        return 1

    return 0


if __name__ == "__main__":
    sys.exit(main())
