"""
Command-line entry point: gen | train | sample | eval
"""

import argparse
import logging
import sys
from typing import List, Optional

from dotenv import load_dotenv

from commands import COMMANDS
from common.errors import (
    CheckpointError,
    ConfigError,
    InvalidArgumentError,
    NumericError,
    PulaskiError,
    VolumeFormatError,
)
from common.logging_setup import configure_logging
from config.settings import load_config

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INVALID = 2
EXIT_NUMERIC = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="run_pulaski",
        description="Distribution-matching probabilistic segmentation on synthetic multi-rater data",
    )
    parser.add_argument("command", choices=sorted(COMMANDS), help="step to run")
    parser.add_argument("--config", help="TOML run configuration (default: $PULASKI_CONFIG or config/default.toml)")
    parser.add_argument("--seed", type=int, help="replaces run.seed")
    parser.add_argument("--out", help="replaces run.out_dir")
    parser.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
        help="override one setting; the value is read as a TOML literal (repeatable)",
    )
    parser.add_argument("--resume", action="store_true", help="train: continue from the last checkpoint")
    parser.add_argument("--log-level", help="DEBUG, INFO, WARNING or ERROR (default: $PULASKI_LOG_LEVEL or INFO)")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """
    Parse arguments, run one command and map failures to exit codes.

    Returns:
        0 on success, 2 for invalid configuration or inputs, 3 for numeric
        failures, 1 for anything else the code base raises
    """
    load_dotenv()
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)

    try:
        cfg = load_config(args.config, args.overrides, seed=args.seed, out_dir=args.out)
        if args.command == "train":
            COMMANDS["train"](cfg, resume=args.resume)
        else:
            COMMANDS[args.command](cfg)
    except (ConfigError, InvalidArgumentError, CheckpointError, VolumeFormatError) as e:
        logger.error(f"{args.command}: {e}")
        return EXIT_INVALID
    except NumericError as e:
        logger.error(f"{args.command}: numeric failure: {e}")
        return EXIT_NUMERIC
    except PulaskiError as e:
        logger.error(f"{args.command}: {e}")
        return EXIT_FAILURE
    except KeyboardInterrupt:
        logger.info("Received shutdown signal")
        return EXIT_FAILURE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
