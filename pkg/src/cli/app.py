"""
Command-line application - argument parsing and exit codes

Exit codes: 0 ok, 2 input error, 3 tolerance failure, 4 budget exceeded.
"""
import argparse
import logging
import sys
from typing import List, Optional, Sequence

from src import __version__
from src.cli.handlers.inspect_handlers import InspectHandlers
from src.cli.handlers.pmf_handlers import PmfHandlers
from src.cli.handlers.simulate_handlers import SimulateHandlers
from src.cli.handlers.validate_handlers import ValidateHandlers
from src.services.validation_service import ErrorHandler
from src.utils.constants import ExitCodes

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gfbp",
        description="State probabilities of generalized (fractional) birth processes",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)
    PmfHandlers.register(subparsers)
    ValidateHandlers.register(subparsers)
    SimulateHandlers.register(subparsers)
    InspectHandlers.register(subparsers)
    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse argv and run one command"""
    argv: List[str] = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on usage errors and 0 on --help
        return int(e.code or 0)

    logger.info(f"Running {args.command}")
    try:
        code = args.handler(args, argv)
    except Exception as e:
        ErrorHandler.log_error(e, args.command)
        sys.stderr.write(f"error: {ErrorHandler.get_user_friendly_error(e)}\n")
        return ErrorHandler.exit_code_for(e)
    logger.info(f"Finished {args.command} with exit code {code}")
    return code if code is not None else ExitCodes.OK
