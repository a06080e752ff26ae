import argparse
import sys
from typing import List, Optional

from pydantic import ValidationError

from adasecant.commands import compare, grid, run
from adasecant.errors import AdasecantError, ConfigError, ExperimentAbort, OutputError
from adasecant.settings import configure_logging

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adasecant", description="Adasecant optimizer experiments")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v for INFO, -vv for DEBUG")
    subparsers = parser.add_subparsers(dest="command", required=True)
    run.register(subparsers)
    grid.register(subparsers)
    compare.register(subparsers)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging({0: None, 1: "INFO"}.get(args.verbose, "DEBUG"))
    try:
        return args.func(args)
    except (ConfigError, ValidationError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except ExperimentAbort as e:
        print(f"aborted: {e}", file=sys.stderr)
        return EXIT_FAILED
    except OutputError as e:
        print(f"output error ({e.path}): {e}", file=sys.stderr)
        return EXIT_FAILED
    except AdasecantError as e:
        print(f"failed: {e}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
