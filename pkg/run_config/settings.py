# settings.py
import os
from dataclasses import dataclass
from typing import Any, Dict, Optional, Tuple

from config import DEFAULT_OUTPUT_DIR
from plant.scenarios import SCENARIO_NAMES
from services.controller import ControllerKind

# Допустимые регуляторы для --controllers
CONTROLLER_KINDS = tuple(kind.value for kind in ControllerKind)

# Ключи --override KEY=VAL и куда они попадают:
#   gain      — GainSet (alpha, K, beta, theta_bar)
#   gamma_block — блоки Γ = diag(γ₁·I_m, γ₂·I_n)
#   bound     — ParameterBounds
#   horizon   — t_end, dt
#   initial   — векторы начальных условий (через запятую)
#   baseline  — BaselineGains
ALLOWED_OVERRIDE_KEYS: Dict[str, str] = {
    "alpha": "gain",
    "K": "gain",
    "beta": "gain",
    "theta_bar": "gain",
    "gamma1": "gamma_block",
    "gamma2": "gamma_block",
    "zeta1": "bound",
    "zeta2": "bound",
    "bound_theta_bar": "bound",
    "t_end": "horizon",
    "dt": "horizon",
    "x0": "initial",
    "theta_hat0": "initial",
    "k": "baseline",
    "gamma": "baseline",
    "sigma": "baseline",
    "a_bar": "baseline",
    "d_bar": "baseline",
}

DEFAULT_SEED = 0


class RunConfigError(Exception):
    pass


class OverrideError(RunConfigError):
    pass


@dataclass(frozen=True)
class RunConfig:
    scenario_source: str
    overrides: Tuple[Tuple[str, Any], ...] = ()
    output_dir: str = DEFAULT_OUTPUT_DIR
    controllers: Tuple[ControllerKind, ...] = (ControllerKind.RISE,)
    seed: int = DEFAULT_SEED
    dt: Optional[float] = None
    t_end: Optional[float] = None

    def __post_init__(self) -> None:
        if not self.controllers:
            raise RunConfigError("at least one controller is required")
        if not self.scenario_source:
            raise RunConfigError("scenario source is empty")
        if self.dt is not None and not self.dt > 0:
            raise RunConfigError(f"--dt must be positive, got {self.dt!r}")
        # t_end = 0 — одна строка записи, начальное состояние
        if self.t_end is not None and not self.t_end >= 0:
            raise RunConfigError(f"--t-end must be nonnegative, got {self.t_end!r}")

    @property
    def is_builtin(self) -> bool:
        return self.scenario_source in SCENARIO_NAMES

    @property
    def is_config_file(self) -> bool:
        return not self.is_builtin and (self.scenario_source.endswith(".json") or os.path.exists(self.scenario_source))


def parse_controllers(raw: str) -> Tuple[ControllerKind, ...]:
    """"rise,sigma_mod" -> (RISE, SIGMA_MOD); порядок сохраняется, повторы убираются."""
    kinds = []
    for item in (part.strip() for part in raw.split(",")):
        if not item:
            continue
        if item not in CONTROLLER_KINDS:
            raise RunConfigError(f"unknown controller {item!r}; allowed: {', '.join(CONTROLLER_KINDS)}")
        kind = ControllerKind(item)
        if kind not in kinds:
            kinds.append(kind)
    if not kinds:
        raise RunConfigError("--controllers is empty")
    return tuple(kinds)

