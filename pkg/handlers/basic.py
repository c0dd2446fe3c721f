# handlers/basic.py

import argparse
import logging
import sys
from typing import Any, Callable, Dict, Iterable, List

from config import DEFAULT_OUTPUT_DIR
from plant.model import PlantError
from plant.scenarios import ALLOWED_PARAMS, SCENARIO_NAMES, ScenarioError, builtin_scenario, dump_scenario
from records import RecordFormatError
from run_config import (
    CONTROLLER_KINDS,
    DEFAULT_SEED,
    RunConfig,
    RunConfigError,
    parse_controllers,
    parse_overrides,
)
from services.analysis import Lemma1ViolationError
from services.controller import ControllerError
from services.simulation import SimulationConfigError, SimulationDivergedError

logger = logging.getLogger(__name__)

# Коды выхода CLI
EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_CERTIFICATE = 2
EXIT_DIVERGED = 3

Handler = Callable[[argparse.Namespace], int]

# Ошибки конфигурации и входных данных → код 1
CONFIG_ERRORS = (
    ScenarioError,
    RunConfigError,
    PlantError,
    ControllerError,
    RecordFormatError,
    SimulationConfigError,
    Lemma1ViolationError,
    OSError,
)


def add_scenario_arguments(parser: argparse.ArgumentParser) -> None:
    """Общие флаги для run и verify."""
    source = parser.add_mutually_exclusive_group()
    source.add_argument("--scenario", default=None, help=f"built-in scenario: {', '.join(SCENARIO_NAMES)}")
    source.add_argument("--config", default=None, help="path to a scenario JSON file")
    parser.add_argument(
        "--controllers",
        default="rise",
        help=f"comma-separated list of controllers ({', '.join(CONTROLLER_KINDS)})",
    )
    parser.add_argument(
        "--override",
        action="append",
        default=[],
        metavar="KEY=VAL",
        help="override a gain, bound, horizon or initial condition (repeatable)",
    )
    parser.add_argument("--out", default=DEFAULT_OUTPUT_DIR, help="output directory for CSV/JSON artifacts")
    parser.add_argument("--seed", type=int, default=DEFAULT_SEED, help="seed for randomized checks")
    parser.add_argument("--dt", type=float, default=None, help="integration step, s")
    parser.add_argument("--t-end", dest="t_end", type=float, default=None, help="horizon, s")


def build_run_config(args: argparse.Namespace) -> RunConfig:
    return RunConfig(
        scenario_source=args.config or args.scenario or SCENARIO_NAMES[0],
        overrides=parse_overrides(args.override),
        output_dir=args.out,
        controllers=parse_controllers(args.controllers),
        seed=args.seed,
        dt=args.dt,
        t_end=args.t_end,
    )


def run_guarded(handler: Handler, args: argparse.Namespace) -> int:
    """Переводит исключения в коды выхода; сообщение всегда называет место ошибки."""
    try:
        return handler(args)
    except SimulationDivergedError as exc:
        logger.error("simulation diverged at step %d", exc.step_index)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except CONFIG_ERRORS as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def format_table(rows: Iterable[List[str]], headers: List[str]) -> str:
    rows = [list(map(str, row)) for row in rows]
    widths = [max(len(h), *(len(row[i]) for row in rows)) if rows else len(h) for i, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines.extend("  ".join(cell.ljust(w) for cell, w in zip(row, widths)) for row in rows)
    return "\n".join(lines)


def fmt_value(value: Any) -> str:
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def checks_table(checks: Dict[str, Dict[str, Any]]) -> str:
    rows = [
        [name, "PASS" if item["passed"] else "FAIL", fmt_value(item["value"]), fmt_value(item["threshold"])]
        for name, item in checks.items()
    ]
    return format_table(rows, ["check", "result", "value", "threshold"])


def cmd_scenarios(args: argparse.Namespace) -> int:
    """Список встроенных сценариев; с --dump пишет JSON-конфиг выбранного."""
    if args.dump:
        scenario = builtin_scenario(args.name or SCENARIO_NAMES[0])
        dump_scenario(scenario, args.dump)
        print(f"scenario {scenario.name} written to {args.dump}")
        return EXIT_OK

    rows = [[name, ", ".join(f"{k}={v}" for k, v in ALLOWED_PARAMS[name].items())] for name in SCENARIO_NAMES]
    print(format_table(rows, ["scenario", "parameters"]))
    return EXIT_OK


def register_basic_handlers(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("scenarios", help="list built-in scenarios or dump one as a JSON config")
    parser.add_argument("name", nargs="?", default=None, help="scenario to dump")
    parser.add_argument("--dump", default=None, metavar="PATH", help="write the scenario config to PATH")
    parser.set_defaults(handler=cmd_scenarios)
