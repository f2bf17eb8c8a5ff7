import argparse
import json
import logging
import logging.config
import os
from typing import Sequence

from regdiff.config import LOG_CONFIG, LOG_DIR
from regdiff.errors import ConfigParse, RegdiffError, ValidationFailure
from regdiff.metrics.export import write_resolved_config
from regdiff.orchestration.loader import PRESET_PREFIX, load_config
from regdiff.orchestration.manager import Manager
from regdiff.orchestration.models import ExperimentConfig
from regdiff.orchestration.presets import PRESET_ALIASES, preset_names

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2


def configure_logging(level: str | None = None):
    """
    Apply the package logging configuration, optionally overriding the regdiff logger level.
    """
    LOG_DIR.mkdir(exist_ok=True)
    logging.config.dictConfig(LOG_CONFIG)
    if level:
        logging.getLogger("regdiff").setLevel(level)


def build_parser() -> argparse.ArgumentParser:
    # Options shared by every subcommand
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--workers",
        type=int,
        default=None,
        help="Worker processes for independent runs (default: available parallelism).",
    )
    common.add_argument(
        "--seed",
        type=int,
        default=None,
        help="Override algorithm.seed.",
    )
    common.add_argument(
        "--log-level",
        type=str.upper,
        default=None,
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="Level of the regdiff logger.",
    )
    common.add_argument(
        "--override",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="Override a configuration value; repeatable.",
    )

    parser = argparse.ArgumentParser(
        prog="regdiff",
        description="Regularized diffusion for decentralized stochastic Pareto optimization",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    run = subparsers.add_parser("run", parents=[common], help="Run the experiment a config describes.")
    run.add_argument("config", help="TOML or JSON config, or preset:<name>.")

    verify = subparsers.add_parser("verify", parents=[common], help="Check one of the analytical bounds.")
    verify.add_argument("which", choices=["bias", "contraction", "msd"])
    verify.add_argument("config", help="TOML or JSON config, or preset:<name>.")

    preset = subparsers.add_parser("preset", parents=[common], help="Run or dump a builtin preset.")
    preset.add_argument("name", nargs="?", help="Preset name; omit with --list.")
    preset.add_argument("--out", type=str, default=None, help="Output directory.")
    preset.add_argument("--dump", action="store_true", help="Only write the resolved config.")
    preset.add_argument("--list", action="store_true", help="List the builtin presets.")
    return parser


def _load(args: argparse.Namespace) -> ExperimentConfig:
    overrides = list(args.override)
    if args.seed is not None:
        overrides.append(f"algorithm.seed={args.seed}")

    match args.command:
        case "run":
            source = args.config
        case "verify":
            source = args.config
            overrides.append(f"task={json.dumps(args.which)}")
        case "preset":
            source = f"{PRESET_PREFIX}{args.name}"
            if args.out is not None:
                overrides.append(f"output={json.dumps(args.out)}")
    return load_config(source, overrides)


def main(argv: Sequence[str] | None = None) -> int:
    """
    Command-line entry point.

    Args:
        argv (Sequence[str], optional): Arguments without the program name; sys.argv when omitted.

    Returns:
        int: 0 on success, 1 on a failed criterion or run error, 2 on a configuration error.

    Example:
        >>> main(["verify", "bias", "preset:bias-1d"])
        [PASS] bias <= bound at every delta
        0
    """
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)

    if args.command == "preset" and (args.list or args.name is None):
        for name in preset_names():
            print(name)
        for alias, name in sorted(PRESET_ALIASES.items()):
            print(f"{alias} (alias of {name})")
        return EXIT_OK

    try:
        config = _load(args)
    except (ConfigParse, ValidationFailure) as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG

    if args.command == "preset" and args.dump:
        write_resolved_config(config, config.output)
        return EXIT_OK

    workers = args.workers if args.workers is not None else (os.cpu_count() or 1)
    try:
        with Manager(config, workers) as manager:
            passed = manager.run()
    except ValidationFailure as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG
    except (RegdiffError, ValueError, ArithmeticError) as e:
        logger.error(f"{type(e).__name__}: {e}")
        for note in getattr(e, "__notes__", []):
            logger.error(note)
        return EXIT_FAILURE

    return EXIT_OK if passed else EXIT_FAILURE
