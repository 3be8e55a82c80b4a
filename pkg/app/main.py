from __future__ import annotations

import argparse
import logging
import sys
from typing import Optional, Sequence

from pydantic import ValidationError

from app.cli import COMMANDS
from app.config import Settings
from app.core.exceptions import SimulationError
from app.services.exceptions import ServiceError
from app.telemetry import configure_logging, setup_tracing

logger = logging.getLogger(__name__)

EXIT_SIMULATION = 1
EXIT_BAD_INPUT = 2


def create_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rpo",
        description="Resilient pruning observer: FDIA-resilient state estimation for a differential-drive robot.",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        command.register(subparsers)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    settings = Settings()
    configure_logging(settings)
    try:
        args = create_parser().parse_args(argv)
    except SystemExit as e:
        # argparse already wrote usage to stderr.
        return e.code if isinstance(e.code, int) else EXIT_BAD_INPUT

    provider = setup_tracing(settings)
    try:
        return args.func(args, settings)
    except (ServiceError, ValidationError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except SimulationError as e:
        print(f"simulation failed: {e}", file=sys.stderr)
        return EXIT_SIMULATION
    finally:
        if provider is not None:
            provider.shutdown()


if __name__ == "__main__":
    sys.exit(main())
