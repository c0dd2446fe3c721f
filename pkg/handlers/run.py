# handlers/run.py

import argparse
import logging
import os
import sys
from typing import Any, Dict

from plant.scenarios import Scenario, check_scenario_bounds, scenario_to_dict
from records import write_summary_json, write_trajectory_csv
from run_config import RunConfig, resolve_scenario
from services.analysis import RUN_CERTIFICATES, bound_report, tracking_metrics, verification_report
from services.controller import ControllerKind
from services.simulation import TrajectoryRecord, run

from .basic import EXIT_CERTIFICATE, EXIT_OK, add_scenario_arguments, build_run_config, checks_table, run_guarded

logger = logging.getLogger(__name__)

COMPARE_FIELDS = (
    "final_window_rms",
    "final_window_max",
    "final_error",
    "sup_u",
    "final_window_sup_u",
    "min_P",
)


def _summary(record: TrajectoryRecord, scenario: Scenario, report: Dict[str, Any]) -> Dict[str, Any]:
    return {
        "scenario": scenario_to_dict(scenario),
        "controller": record.kind.value,
        "steps": len(record) - 1,
        "switches": record.switch_count,
        "renormalizations": record.renormalizations,
        "verification": report,
    }


def compare_records(records: Dict[ControllerKind, TrajectoryRecord]) -> Dict[str, Any]:
    """Ошибка в финальном окне, усилие управления и min P по регуляторам."""
    table = {}
    fraction = None
    for kind, record in records.items():
        metrics = tracking_metrics(record)
        fraction = metrics["final_fraction"]
        table[kind.value] = {field: metrics[field] for field in COMPARE_FIELDS}
    return {"final_fraction": fraction, "controllers": table}


def execute_run(config: RunConfig) -> int:
    scenario = resolve_scenario(config)
    check_scenario_bounds(scenario)
    os.makedirs(config.output_dir, exist_ok=True)

    bounds = bound_report(scenario) if ControllerKind.RISE in config.controllers else None
    records: Dict[ControllerKind, TrajectoryRecord] = {}
    failed = []

    for kind in config.controllers:
        record = run(scenario, kind)
        records[kind] = record
        report = verification_report(record, scenario, bounds=bounds)

        write_trajectory_csv(record, os.path.join(config.output_dir, f"{kind.value}.csv"))
        write_summary_json(
            _summary(record, scenario, report),
            os.path.join(config.output_dir, f"{kind.value}.summary.json"),
        )

        if report["checks"]:
            print(f"{scenario.name} / {kind.value}")
            print(checks_table({name: report["checks"][name] for name in RUN_CERTIFICATES}))
        failed.extend(f"{kind.value}:{name}" for name in RUN_CERTIFICATES
                      if name in report["checks"] and not report["checks"][name]["passed"])

    if len(records) > 1:
        write_summary_json(compare_records(records), os.path.join(config.output_dir, "compare.json"))

    if failed:
        print(f"certificate failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_CERTIFICATE
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    return run_guarded(lambda a: execute_run(build_run_config(a)), args)


def register_run_handlers(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("run", help="simulate a scenario and write CSV/JSON artifacts")
    add_scenario_arguments(parser)
    parser.set_defaults(handler=cmd_run)
