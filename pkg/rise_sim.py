import argparse
import logging
import sys
from typing import List, Optional

import config  # noqa: F401  (настройка логирования и .env)
from handlers import register_all_handlers

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rise_sim",
        description="Closed-loop simulation and certificate checks for the projected RISE controller.",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    register_all_handlers(subparsers)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logger.debug("command %s", args.command)
    return args.handler(args)


if __name__ == "__main__":
    sys.exit(main())
