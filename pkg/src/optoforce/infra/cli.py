"""
Command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 physics or
convergence failure, 3 IO error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

from dotenv import load_dotenv

from optoforce import __version__
from optoforce.domain.data_product import OutputTarget
from optoforce.domain.errors import ConfigError, InvalidParameterError, PhysicsError
from optoforce.domain.experiment_service import EXPERIMENTS
from optoforce.infra.config import load_config, override_paths
from optoforce.infra.di import build_container
from optoforce.infra.logging_config import get_logger, setup_logging

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_PHYSICS = 2
EXIT_IO = 3

_HELP = {
    "derive": "x_zpf, F1, F2 and omega_eff at the configured distance",
    "classical": "classical steady state of the configured operating point",
    "response-map": "steady-state response over drive phase and omega_eff (or h), with setpoint",
    "noise-spectrum": "full and reduced optical output spectra per |beta1|",
    "variance-detuning": "quadrature variance over omega_eff - omega_d",
    "variance-drive": "quadrature variance over the mechanical drive amplitude",
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML/JSON config file, or 'defaults'")
    common.add_argument("--out", help="Output file; standard output when omitted")
    common.add_argument("--format", choices=["csv", "json"], help="Output format (default: from --out suffix, else csv)")
    common.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
        help="Override one configuration value (repeatable)",
    )
    common.add_argument("--threads", type=int, default=1, help="Parallel width of sweeps")
    common.add_argument("--no-timestamp", action="store_true", help="Omit the timestamp from the provenance")
    common.add_argument("--plot-script", action="store_true", help="Also write <out>.plot.py")
    common.add_argument("--log-level", default="WARNING", help="DEBUG, INFO, WARNING or ERROR")
    common.add_argument("--log-file", help="Also log to this rotating file")

    parser = argparse.ArgumentParser(
        prog="optoforce", description="Force-gradient sensing with a backaction-evading optomechanical probe"
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name in EXPERIMENTS:
        sub.add_parser(name, parents=[common], help=_HELP[name], description=_HELP[name])
    return parser


def _output_target(args: argparse.Namespace) -> OutputTarget:
    path = Path(args.out) if args.out else None
    fmt = args.format or ("json" if path is not None and path.suffix.lower() == ".json" else "csv")
    return OutputTarget(path=path, fmt=fmt, plot_script=args.plot_script)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Parse ``argv``, run one experiment and return the exit code.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE

    setup_logging(log_level=args.log_level, log_file=args.log_file)
    logger.debug("optoforce %s: %s", __version__, args.command)
    try:
        if args.threads < 1:
            raise ConfigError("invalid arguments", ["--threads must be at least 1"])
        config = load_config(args.config, args.overrides)
        target = _output_target(args)
        controller = build_container(config, args.threads).experiment_controller()
        controller.run(
            args.command,
            config.to_document(),
            target,
            overrides=override_paths(args.overrides),
            timestamp=not args.no_timestamp,
        )
    except (ConfigError, InvalidParameterError) as exc:
        print(f"optoforce: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PhysicsError as exc:
        print(f"optoforce: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PHYSICS
    except OSError as exc:
        print(f"optoforce: IO error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def run() -> None:
    """Console-script entry point."""
    load_dotenv()
    sys.exit(main())


if __name__ == "__main__":
    run()
