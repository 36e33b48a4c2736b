"""
Command-line entry point for the hybrid mmWave link-level lab.
"""

import argparse
import logging
import os
import sys
from pathlib import Path

from dotenv import load_dotenv
from pydantic import ValidationError

# Add the parent directory to the path so we can import our modules
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from app.config import Scenario, describe_schema, parse_config
from app.scenarios import run_scenario
from utils.errors import ConfigError, SimlabError
from utils.result_utils import emit_csv, emit_gnuplot

load_dotenv()

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG_ERROR = 1
EXIT_RUNTIME_ERROR = 2


def configure_logging(level=None):
    """Configure root logging from ``level`` or ``SIMLAB_LOG_LEVEL``."""
    level = (level or os.getenv("SIMLAB_LOG_LEVEL", "INFO")).upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        force=True,
    )


def build_parser():
    """Argument parser for ``simlab``."""
    parser = argparse.ArgumentParser(
        prog="simlab",
        description="Run a Monte-Carlo scenario of the hybrid mmWave lab and write CSV results",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="config keys (key = value, defaults shown):\n" + describe_schema(),
    )
    parser.add_argument("scenario", choices=[s.value for s in Scenario], help="Scenario to run")
    parser.add_argument("--config", type=Path, help="Config file with key = value lines")
    parser.add_argument("--seed", type=int, help="64-bit unsigned seed")
    parser.add_argument("--trials", type=int, help="Number of Monte-Carlo trials")
    parser.add_argument("--out", type=Path, help="Output CSV path")
    parser.add_argument(
        "--threads",
        type=int,
        default=int(os.getenv("SIMLAB_THREADS", "0")) or None,
        help="Worker processes (default: SIMLAB_THREADS or the config value)",
    )
    parser.add_argument(
        "--gnuplot", action="store_true", help="Also write a gnuplot data file next to the CSV"
    )
    parser.add_argument("--log-level", help="Logging level (default: SIMLAB_LOG_LEVEL or INFO)")
    parser.add_argument("overrides", nargs="*", help="key=value config overrides")
    return parser


def load_config(args):
    """
    Merge the config file, overrides and flags into a ScenarioConfig.

    Raises:
        ConfigError: If anything fails to parse or validate.
    """
    source = ""
    if args.config is not None:
        try:
            source = args.config.read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(None, f"cannot read config file {args.config}: {e}") from e

    overrides = list(args.overrides)
    for flag, key in (("seed", "seed"), ("trials", "trials"), ("out", "out_path"), ("threads", "threads")):
        value = getattr(args, flag)
        if value is not None:
            overrides.append(f"{key}={value}")
    if args.gnuplot:
        overrides.append("gnuplot=true")
    return parse_config(source, overrides, scenario=args.scenario)


def main(argv=None):
    """Run one scenario; returns the process exit code."""
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)

    try:
        config = load_config(args)
    except ConfigError as e:
        logger.error(f"Invalid configuration: {e}")
        return EXIT_CONFIG_ERROR

    try:
        records = run_scenario(config)
        emit_csv(records, config.out_path)
        if config.gnuplot:
            emit_gnuplot(records, config.out_path.with_suffix(".dat"))
    except (ConfigError, ValidationError) as e:
        logger.error(f"Invalid configuration: {e}")
        return EXIT_CONFIG_ERROR
    except (SimlabError, OSError) as e:
        logger.error(f"Scenario {config.scenario.value} failed: {e}")
        return EXIT_RUNTIME_ERROR

    logger.info(f"Results written to {config.out_path}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
