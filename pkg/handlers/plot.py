# handlers/plot.py

import argparse
import logging
import os
import sys
from typing import List, Optional

from records import read_trajectory_csv
from services.plotting import write_plot_script

from .basic import EXIT_CONFIG, EXIT_OK, run_guarded

logger = logging.getLogger(__name__)

DEFAULT_SCRIPT_NAME = "plot_trajectories.py"


def execute_plot(paths: List[str], out: str, labels: Optional[List[str]] = None) -> int:
    records = [read_trajectory_csv(path) for path in paths]
    write_plot_script(records, out, labels or None)
    print(f"plot script written to {out}")
    return EXIT_OK


def cmd_plot(args: argparse.Namespace) -> int:
    if args.label and len(args.label) != len(args.records):
        print(f"error: --label given {len(args.label)} time(s) for {len(args.records)} record(s)", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or os.path.join(os.path.dirname(args.records[0]) or ".", DEFAULT_SCRIPT_NAME)
    return run_guarded(lambda a: execute_plot(a.records, out, a.label), args)


def register_plot_handlers(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("plot", help="write a matplotlib script for one or more CSV records")
    parser.add_argument("records", nargs="+", help="trajectory CSV files")
    parser.add_argument("--out", default=None, help="path of the generated script")
    parser.add_argument("--label", action="append", default=[], help="legend label per record (repeatable)")
    parser.set_defaults(handler=cmd_plot)
