# handlers/verify.py

import argparse
import logging
import os

from plant.scenarios import check_scenario_bounds
from records import write_summary_json
from run_config import RunConfig, resolve_scenario
from services.analysis import verification_report
from services.controller import ControllerKind
from services.simulation import run

from .basic import EXIT_CERTIFICATE, EXIT_OK, add_scenario_arguments, build_run_config, checks_table, run_guarded

logger = logging.getLogger(__name__)


def execute_verify(config: RunConfig) -> int:
    """
    Полный набор проверок для RISE: сертификаты прогона, монотонность V_L,
    касательность на границе, тождество для r и рандомизированная оценка ‖(Y_dΓY_dᵀ)⁻¹‖.
    Код 2, если хоть одна проверка не прошла.
    """
    scenario = resolve_scenario(config)
    check_scenario_bounds(scenario)

    record = run(scenario, ControllerKind.RISE)
    report = verification_report(record, scenario, seed=config.seed)

    print(f"{scenario.name} / {ControllerKind.RISE.value} (seed {config.seed})")
    print(checks_table(report["checks"]))

    os.makedirs(config.output_dir, exist_ok=True)
    write_summary_json(report, os.path.join(config.output_dir, "verify.json"))

    if not report["certified"]:
        failed = [name for name, item in report["checks"].items() if not item["passed"]]
        logger.warning("verification failed on %s: %s", scenario.name, ", ".join(failed))
        return EXIT_CERTIFICATE
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    return run_guarded(lambda a: execute_verify(build_run_config(a)), args)


def register_verify_handlers(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("verify", help="run the full invariant suite on a scenario")
    add_scenario_arguments(parser)
    parser.set_defaults(handler=cmd_verify)
