import logging
import math
from dataclasses import replace
from typing import Any, Dict, Iterable, List, Tuple

import numpy as np

from plant.model import PlantError
from plant.scenarios import Scenario, ScenarioError, builtin_scenario, load_scenario, with_updates
from services.controller import ControllerError, block_gamma

from .settings import ALLOWED_OVERRIDE_KEYS, OverrideError, RunConfig

logger = logging.getLogger(__name__)

Override = Tuple[str, Any]


def _parse_float(key: str, raw: str) -> float:
    try:
        value = float(raw)
    except ValueError:
        raise OverrideError(f"--override {key}: expected a number, got {raw!r}")
    if not math.isfinite(value):
        raise OverrideError(f"--override {key}: value must be finite, got {raw!r}")
    return value


def parse_override(text: str) -> Override:
    """
    "beta=0.01" -> ("beta", 0.01), "x0=1,0.5" -> ("x0", [1.0, 0.5]).
    Ключ проверяется по ALLOWED_OVERRIDE_KEYS, значение — по типу.
    """
    if "=" not in text:
        raise OverrideError(f"--override expects KEY=VAL, got {text!r}")
    key, raw = (part.strip() for part in text.split("=", 1))
    if key not in ALLOWED_OVERRIDE_KEYS:
        raise OverrideError(f"unknown override key {key!r}; allowed: {', '.join(sorted(ALLOWED_OVERRIDE_KEYS))}")
    if not raw:
        raise OverrideError(f"--override {key}: empty value")

    if ALLOWED_OVERRIDE_KEYS[key] == "initial":
        return key, [_parse_float(key, item.strip()) for item in raw.split(",")]
    return key, _parse_float(key, raw)


def parse_overrides(items: Iterable[str]) -> Tuple[Override, ...]:
    return tuple(parse_override(item) for item in items)


def apply_overrides(scenario: Scenario, overrides: Iterable[Override]) -> Scenario:
    """Применяет все переопределения разом; инварианты проверяются на новом сценарии."""
    grouped: Dict[str, Dict[str, Any]] = {}
    for key, value in overrides:
        grouped.setdefault(ALLOWED_OVERRIDE_KEYS[key], {})[key] = value
    if not grouped:
        return scenario

    changes: Dict[str, Any] = {}
    keys: List[str] = [key for group in grouped.values() for key in group]
    try:
        gain_changes = dict(grouped.get("gain", {}))
        if "gamma_block" in grouped:
            g = scenario.gains
            m, n = g.m, g.n
            gamma1 = grouped["gamma_block"].get("gamma1")
            gamma2 = grouped["gamma_block"].get("gamma2")
            block1 = gamma1 * np.eye(m) if gamma1 is not None else g.Gamma[:m, :m]
            block2 = gamma2 * np.eye(n) if gamma2 is not None else g.Gamma[m:, m:]
            gain_changes["Gamma"] = block_gamma(block1, block2)
        if gain_changes:
            changes["gains"] = replace(scenario.gains, **gain_changes)

        if "bound" in grouped:
            bound_changes = dict(grouped["bound"])
            if "bound_theta_bar" in bound_changes:
                bound_changes["theta_bar"] = bound_changes.pop("bound_theta_bar")
            changes["bounds"] = replace(scenario.bounds, **bound_changes)

        if "horizon" in grouped:
            changes.update(grouped["horizon"])

        if "initial" in grouped:
            changes.update({key: np.array(value) for key, value in grouped["initial"].items()})

        if "baseline" in grouped:
            changes["baseline"] = replace(scenario.baseline, **grouped["baseline"])

        updated = with_updates(scenario, **changes)
    except (ScenarioError, ControllerError, PlantError) as exc:
        raise OverrideError(f"--override {', '.join(keys)}: {exc}") from exc

    logger.info("overrides applied to %s: %s", scenario.name, ", ".join(f"{k}={v}" for k, v in overrides_view(grouped)))
    return updated


def overrides_view(grouped: Dict[str, Dict[str, Any]]) -> List[Override]:
    return [(key, value) for group in grouped.values() for key, value in group.items()]


def resolve_scenario(config: RunConfig) -> Scenario:
    """Встроенный сценарий или JSON-файл, затем --dt/--t-end, затем --override."""
    if config.is_config_file:
        scenario = load_scenario(config.scenario_source)
    else:
        scenario = builtin_scenario(config.scenario_source)

    horizon = {}
    if config.dt is not None:
        horizon["dt"] = config.dt
    if config.t_end is not None:
        horizon["t_end"] = config.t_end
    if horizon:
        scenario = with_updates(scenario, **horizon)

    return apply_overrides(scenario, config.overrides)

