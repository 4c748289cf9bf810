import argparse
import json
import logging
import sys

from pydantic import ValidationError

from config import config
from errors import TermStructureError
from lmm_system import LiborTermStructureSystem

logger = logging.getLogger(__name__)

COMMANDS = ("build", "extend", "interpolate", "simulate", "validate", "price")

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_INVALID_INPUT = 2
EXIT_IO_ERROR = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="levy-libor",
        description="LIBOR market model driven by a time-inhomogeneous Levy process",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--scenario", required=True, help="scenario JSON file")
    parser.add_argument(
        "--out", default="out", help="directory for model.json, report.json and paths.csv"
    )
    parser.add_argument("--seed", type=int, help="overrides the scenario seed")
    parser.add_argument("--paths", type=int, help="overrides the scenario path count")
    parser.add_argument("--step", type=float, help="overrides the scenario step size (years)")
    return parser


def run(argv: list[str] | None = None) -> int:
    """
    Parse arguments, execute one command and return the exit status.

    0 on success, 1 when a validation check failed, 2 for invalid input
    (scenario, flags or model) and 3 for I/O failures.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_INVALID_INPUT

    system = LiborTermStructureSystem(config, args.out)
    try:
        scenario = system.load(args.scenario, seed=args.seed, paths=args.paths, step=args.step)
        report = system.run(args.command, scenario)
    except OSError as e:
        logger.error("I/O failure: %s", e)
        return EXIT_IO_ERROR
    except (TermStructureError, ValidationError) as e:
        logger.error("%s failed: %s", args.command, e)
        return EXIT_INVALID_INPUT

    if args.command == "validate":
        for name, check in report["checks"].items():
            print(f"{name:24s} {'PASS' if check['passed'] else 'FAIL'}  {check['detail']}")
        if not report["passed"]:
            logger.warning("Validation failed, see %s", system.store.out_dir / "report.json")
            return EXIT_CHECK_FAILED
    elif args.command == "price":
        print(json.dumps(report["caplets"], indent=2))
    logger.info("Artifacts written to %s", system.store.out_dir)
    return EXIT_OK


def main() -> None:
    logging.basicConfig(
        level=config.LOG_LEVEL,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    sys.exit(run())


if __name__ == "__main__":
    main()
