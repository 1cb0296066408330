"""
GFBP Toolkit - entry point
"""
import logging
import sys
from typing import Optional, Sequence

from src.config import settings
from src.cli.app import run


def configure_logging() -> None:
    """Log to stderr; stdout carries command output"""
    logging.basicConfig(
        level=getattr(logging, settings.log_level.upper(), logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            logging.StreamHandler(sys.stderr)
        ]
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run the command line"""
    configure_logging()
    return run(argv)


if __name__ == "__main__":
    sys.exit(main())
