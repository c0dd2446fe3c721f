"""
Встроенные сценарии и их JSON-конфигурация.

Траектории не разбираются из текста: конфиг ссылается на встроенный набор
по имени и может поменять только его скалярные параметры (амплитуда, частота...).
"""

import json
import logging
import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Any, Dict, Mapping, Optional, Tuple

import numpy as np

from config import DEFAULT_DT, DEFAULT_T_END
from plant.model import (
    ParameterBounds,
    PlantError,
    ReferenceTrajectory,
    SystemModel,
    as_state,
    check_parameter_bounds,
    check_reference,
    eval_theta,
)
from services.analysis import compliant_beta, nb_bounds
from services.baselines import BaselineGains
from services.controller import ControllerError, ControllerKind, GainSet

logger = logging.getLogger(__name__)

SCENARIO_NAMES = ("S1_scalar", "S2_twostate", "S3_constant_param", "S4_disturbance_only")

# Какие скалярные параметры встроенного набора можно менять из конфига
ALLOWED_PARAMS: Dict[str, Dict[str, float]] = {
    "S1_scalar": {"offset": 1.0, "amplitude": 0.5, "frequency": 2.0},
    "S2_twostate": {"disturbance": 0.1},
    "S3_constant_param": {"offset": 1.0},
    "S4_disturbance_only": {"amplitude": 0.5, "frequency": 1.5},
}

# θ̄ = THETA_MARGIN · sup‖θ(t)‖
THETA_MARGIN = 1.25
# Нижняя граница для ζ₁, ζ₂ и θ̄, когда параметр постоянный или нулевой
BOUND_FLOOR = 1e-6
THETA_BAR_FLOOR = 0.1
# Горизонт, на котором подбирается β встроенных сценариев
GAIN_DESIGN_HORIZON = 40.0
# Сетка на периоде 2π для сценариев без замкнутых формул супремумов
PERIOD_SAMPLES = 20_001
# Относительный допуск, с которым t_end должен быть кратен dt
STEP_TOLERANCE = 1e-9

TOP_LEVEL_KEYS = {"scenario", "params", "controller", "x0", "theta_hat0", "horizon", "gains", "bounds", "baseline"}
HORIZON_KEYS = {"t_end", "dt"}
GAIN_KEYS = {"alpha", "K", "beta", "Gamma", "theta_bar"}
BOUND_KEYS = {"theta_bar", "zeta1", "zeta2"}
BASELINE_KEYS = {"k", "gamma", "sigma", "a_bar", "d_bar"}


class ScenarioError(Exception):
    pass


class UnknownScenarioError(ScenarioError):
    pass


class ScenarioConfigError(ScenarioError):
    def __init__(self, message: str, location: str = ""):
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    params: Tuple[Tuple[str, float], ...]
    model: SystemModel
    reference: ReferenceTrajectory
    bounds: ParameterBounds
    gains: GainSet
    baseline: BaselineGains
    x0: np.ndarray
    theta_hat0: np.ndarray
    t_end: float
    dt: float
    controller_kind: ControllerKind = ControllerKind.RISE

    def __post_init__(self) -> None:
        model = self.model
        if self.gains.m != model.m or self.gains.p != model.p:
            raise ScenarioError(
                f"Gamma of size {self.gains.p} (m={self.gains.m}) does not fit n={model.n}, m={model.m}"
            )
        try:
            x0 = as_state(self.x0, model.n, "x0")
            theta_hat0 = as_state(self.theta_hat0, model.p, "theta_hat0")
        except PlantError as exc:
            raise ScenarioError(str(exc)) from exc
        if not np.linalg.norm(theta_hat0) < self.gains.theta_bar:
            raise ScenarioError(
                f"||theta_hat0|| = {np.linalg.norm(theta_hat0):.6g} must be strictly below theta_bar = {self.gains.theta_bar:.6g}"
            )
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ScenarioError(f"dt must be positive, got {self.dt!r}")
        if not (math.isfinite(self.t_end) and self.t_end >= 0):
            raise ScenarioError(f"t_end must be nonnegative, got {self.t_end!r}")
        steps = self.t_end / self.dt
        if abs(steps - round(steps)) > STEP_TOLERANCE * max(1.0, steps):
            raise ScenarioError(
                f"t_end = {self.t_end!r} is not a whole number of steps dt = {self.dt!r} ({steps:.6g} steps)"
            )
        x0.setflags(write=False)
        theta_hat0.setflags(write=False)
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "theta_hat0", theta_hat0)
        object.__setattr__(self, "controller_kind", ControllerKind(self.controller_kind))

    @property
    def n(self) -> int:
        return self.model.n

    @property
    def m(self) -> int:
        return self.model.m

    @property
    def steps(self) -> int:
        return int(round(self.t_end / self.dt))


def with_updates(scenario: Scenario, **changes: Any) -> Scenario:
    """Новый сценарий с заменёнными полями; все проверки повторяются."""
    try:
        return replace(scenario, **changes)
    except ControllerError as exc:
        raise ScenarioError(str(exc)) from exc


# ================== ЗАМКНУТЫЕ ФОРМУЛЫ ==================


def _vec(*values: float) -> np.ndarray:
    return np.array(values, dtype=float)


def _scalar_zero(t: float) -> np.ndarray:
    return _vec(0.0)


def _sine_scalar_model(name: str, offset: float, amplitude: float, frequency: float) -> SystemModel:
    """ẋ = a(t)·x, a(t) = offset + amplitude·sin(frequency·t), d ≡ 0."""
    A, w = amplitude, frequency
    return SystemModel(
        n=1,
        m=1,
        yh=lambda x, t: np.array([[x[0]]]),
        theta_f=lambda t: _vec(offset + A * math.sin(w * t)),
        d=_scalar_zero,
        theta_f_dot=lambda t: _vec(A * w * math.cos(w * t)),
        d_dot=_scalar_zero,
        theta_f_ddot=lambda t: _vec(-A * w * w * math.sin(w * t)),
        d_ddot=_scalar_zero,
        name=name,
    )


def _sine_reference() -> ReferenceTrajectory:
    return ReferenceTrajectory(
        xd=lambda t: _vec(math.sin(t)),
        xd_dot=lambda t: _vec(math.cos(t)),
        xd_ddot=lambda t: _vec(-math.sin(t)),
        xd_bar=1.0,
        delta1=1.0,
        delta2=1.0,
    )


def _circle_reference() -> ReferenceTrajectory:
    return ReferenceTrajectory(
        xd=lambda t: _vec(math.sin(t), math.cos(t)),
        xd_dot=lambda t: _vec(math.cos(t), -math.sin(t)),
        xd_ddot=lambda t: _vec(-math.sin(t), -math.cos(t)),
        xd_bar=1.0,
        delta1=1.0,
        delta2=1.0,
    )


def _twostate_model(disturbance: float) -> SystemModel:
    D = disturbance
    return SystemModel(
        n=2,
        m=3,
        yh=lambda x, t: np.array([[x[0], x[1], 0.0], [0.0, x[0] * x[1], math.sin(x[1])]]),
        theta_f=lambda t: _vec(1.0 + 0.3 * math.sin(t), -0.5 + 0.2 * math.cos(2.0 * t), 0.8),
        d=lambda t: _vec(D * math.sin(3.0 * t), D * math.cos(3.0 * t)),
        theta_f_dot=lambda t: _vec(0.3 * math.cos(t), -0.4 * math.sin(2.0 * t), 0.0),
        d_dot=lambda t: _vec(3.0 * D * math.cos(3.0 * t), -3.0 * D * math.sin(3.0 * t)),
        theta_f_ddot=lambda t: _vec(-0.3 * math.sin(t), -0.8 * math.cos(2.0 * t), 0.0),
        d_ddot=lambda t: _vec(-9.0 * D * math.sin(3.0 * t), -9.0 * D * math.cos(3.0 * t)),
        name="S2_twostate",
    )


def _disturbance_model(amplitude: float, frequency: float) -> SystemModel:
    """Y_h ≡ 0, θ_f ≡ 0: вся неопределённость в d(t), её гасит единичный блок регрессора."""
    A, w = amplitude, frequency
    return SystemModel(
        n=1,
        m=1,
        yh=lambda x, t: np.zeros((1, 1)),
        theta_f=_scalar_zero,
        d=lambda t: _vec(A * math.sin(w * t)),
        theta_f_dot=_scalar_zero,
        d_dot=lambda t: _vec(A * w * math.cos(w * t)),
        theta_f_ddot=_scalar_zero,
        d_ddot=lambda t: _vec(-A * w * w * math.sin(w * t)),
        name="S4_disturbance_only",
    )


def _period_sup(fn) -> float:
    grid = np.linspace(0.0, 2.0 * math.pi, PERIOD_SAMPLES)
    return float(max(np.linalg.norm(fn(float(t))) for t in grid))


# ================== ВСТРОЕННЫЕ СЦЕНАРИИ ==================


@dataclass(frozen=True)
class _Design:
    """Всё, что нужно сценарию, кроме горизонта и начальных условий."""

    model: SystemModel
    reference: ReferenceTrajectory
    bounds: ParameterBounds
    alpha: float
    K: float
    a_bar: float
    d_bar: float
    x0: Tuple[float, ...]


def _design(name: str, params: Dict[str, float]) -> _Design:
    if name in ("S1_scalar", "S3_constant_param"):
        offset = params["offset"]
        amplitude = params.get("amplitude", 0.0)
        frequency = params.get("frequency", 0.0)
        model = _sine_scalar_model(name, offset, amplitude, frequency)
        sup_a = abs(offset) + abs(amplitude)
        bounds = ParameterBounds(
            theta_bar=max(THETA_MARGIN * sup_a, THETA_BAR_FLOOR),
            zeta1=max(abs(amplitude * frequency), BOUND_FLOOR),
            zeta2=max(abs(amplitude) * frequency * frequency, BOUND_FLOOR),
        )
        return _Design(model, _sine_reference(), bounds, 2.0, 5.0, sup_a, 0.0, (1.0,))

    if name == "S2_twostate":
        model = _twostate_model(params["disturbance"])
        bounds = ParameterBounds(
            theta_bar=max(THETA_MARGIN * _period_sup(lambda t: eval_theta(model, t)), THETA_BAR_FLOOR),
            zeta1=max(_period_sup(lambda t: np.concatenate((model.theta_f_dot(t), model.d_dot(t)))), BOUND_FLOOR),
            zeta2=max(_period_sup(lambda t: np.concatenate((model.theta_f_ddot(t), model.d_ddot(t)))), BOUND_FLOOR),
        )
        a_bar = _period_sup(model.theta_f)
        return _Design(model, _circle_reference(), bounds, 3.0, 10.0, a_bar, abs(params["disturbance"]), (0.5, 0.5))

    amplitude = params["amplitude"]
    frequency = params["frequency"]
    model = _disturbance_model(amplitude, frequency)
    bounds = ParameterBounds(
        theta_bar=max(THETA_MARGIN * abs(amplitude), THETA_BAR_FLOOR),
        zeta1=max(abs(amplitude * frequency), BOUND_FLOOR),
        zeta2=max(abs(amplitude) * frequency * frequency, BOUND_FLOOR),
    )
    return _Design(model, _sine_reference(), bounds, 2.0, 5.0, 0.0, abs(amplitude), (1.0,))


def _resolve_params(name: str, params: Optional[Mapping[str, float]]) -> Tuple[Tuple[str, float], ...]:
    if name not in SCENARIO_NAMES:
        raise UnknownScenarioError(f"unknown scenario {name!r}; expected one of {', '.join(SCENARIO_NAMES)}")
    resolved = dict(ALLOWED_PARAMS[name])
    for key, value in (params or {}).items():
        if key not in resolved:
            raise ScenarioConfigError(
                f"unknown parameter {key!r} for {name}; allowed: {', '.join(sorted(resolved))}", f"params.{key}"
            )
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            raise ScenarioConfigError(f"parameter must be a finite number, got {value!r}", f"params.{key}")
        resolved[key] = float(value)
    return tuple(sorted(resolved.items()))


@lru_cache(maxsize=32)
def _compliant_beta(name: str, params: Tuple[Tuple[str, float], ...]) -> float:
    design = _design(name, dict(params))
    gamma1, gamma2 = nb_bounds(design.model, design.reference, design.bounds.theta_bar, GAIN_DESIGN_HORIZON)
    beta = compliant_beta(gamma1, gamma2, design.alpha)
    logger.debug("%s: gamma1=%.6g gamma2=%.6g -> beta=%.6g", name, gamma1, gamma2, beta)
    return beta


def builtin_scenario(
    name: str,
    params: Optional[Mapping[str, float]] = None,
    t_end: Optional[float] = None,
    dt: Optional[float] = None,
    controller_kind: ControllerKind = ControllerKind.RISE,
) -> Scenario:
    """
    Встроенный сценарий с согласованными усилиями:
    θ̄ = 1.25·sup‖θ‖, Γ = I, β = 1.5·(γ₁ + γ₂/α), θ̂(0) = 0, μ(0) = 0.
    """
    resolved = _resolve_params(name, params)
    design = _design(name, dict(resolved))
    model = design.model
    theta_bar = design.bounds.theta_bar

    gains = GainSet(
        alpha=design.alpha,
        K=design.K,
        beta=_compliant_beta(name, resolved),
        Gamma=np.eye(model.p),
        theta_bar=theta_bar,
        m=model.m,
    )
    baseline = BaselineGains(k=5.0, gamma=10.0, sigma=0.1, a_bar=design.a_bar, d_bar=design.d_bar)

    return Scenario(
        name=name,
        params=resolved,
        model=model,
        reference=design.reference,
        bounds=design.bounds,
        gains=gains,
        baseline=baseline,
        x0=np.array(design.x0),
        theta_hat0=np.zeros(model.p),
        t_end=DEFAULT_T_END if t_end is None else float(t_end),
        dt=DEFAULT_DT if dt is None else float(dt),
        controller_kind=ControllerKind(controller_kind),
    )


def check_scenario_bounds(scenario: Scenario) -> Dict[str, float]:
    """Выборочная проверка ограничений на θ и x_d на горизонте сценария."""
    report = check_parameter_bounds(scenario.model, scenario.bounds, scenario.t_end)
    report.update(check_reference(scenario.reference, scenario.t_end))
    return report


# ================== JSON ==================


def _number(value: Any, location: str, positive: bool = False, nonnegative: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ScenarioConfigError(f"expected a finite number, got {value!r}", location)
    if positive and not value > 0:
        raise ScenarioConfigError(f"must be positive, got {value!r}", location)
    if nonnegative and not value >= 0:
        raise ScenarioConfigError(f"must be nonnegative, got {value!r}", location)
    return float(value)


def _vector(value: Any, size: int, location: str) -> np.ndarray:
    if not isinstance(value, list) or len(value) != size:
        raise ScenarioConfigError(f"expected a list of {size} numbers", location)
    return np.array([_number(v, f"{location}[{i}]") for i, v in enumerate(value)])


def _matrix(value: Any, size: int, location: str) -> np.ndarray:
    if not isinstance(value, list) or len(value) != size:
        raise ScenarioConfigError(f"expected a {size}x{size} matrix", location)
    return np.array([_vector(row, size, f"{location}[{i}]") for i, row in enumerate(value)])


def _section(data: Mapping[str, Any], key: str, allowed: set) -> Dict[str, Any]:
    section = data.get(key, {})
    if not isinstance(section, dict):
        raise ScenarioConfigError("expected an object", key)
    unknown = set(section) - allowed
    if unknown:
        raise ScenarioConfigError(f"unknown keys {sorted(unknown)}; allowed: {sorted(allowed)}", key)
    return section


def scenario_from_dict(data: Mapping[str, Any]) -> Scenario:
    """Строгий разбор: неизвестные ключи и неверные типы → ScenarioConfigError с путём."""
    if not isinstance(data, dict):
        raise ScenarioConfigError("top level must be an object", "$")
    unknown = set(data) - TOP_LEVEL_KEYS
    if unknown:
        raise ScenarioConfigError(f"unknown keys {sorted(unknown)}", "$")
    if "scenario" not in data:
        raise ScenarioConfigError("missing required key", "scenario")

    name = data["scenario"]
    if not isinstance(name, str):
        raise ScenarioConfigError("expected a string", "scenario")
    params = data.get("params", {})
    if not isinstance(params, dict):
        raise ScenarioConfigError("expected an object", "params")

    horizon = _section(data, "horizon", HORIZON_KEYS)
    t_end = _number(horizon["t_end"], "horizon.t_end", nonnegative=True) if "t_end" in horizon else None
    dt = _number(horizon["dt"], "horizon.dt", positive=True) if "dt" in horizon else None

    kind = data.get("controller", ControllerKind.RISE.value)
    try:
        kind = ControllerKind(kind)
    except ValueError:
        raise ScenarioConfigError(
            f"unknown controller {kind!r}; expected one of {[k.value for k in ControllerKind]}", "controller"
        )

    try:
        scenario = builtin_scenario(name, params, t_end=t_end, dt=dt, controller_kind=kind)
    except UnknownScenarioError as exc:
        raise ScenarioConfigError(str(exc), "scenario") from exc
    except ScenarioConfigError:
        raise
    except ScenarioError as exc:
        # на этом этапе остаётся только несогласованный горизонт
        raise ScenarioConfigError(str(exc), "horizon") from exc
    model = scenario.model
    changes: Dict[str, Any] = {}

    if "x0" in data:
        changes["x0"] = _vector(data["x0"], model.n, "x0")
    if "theta_hat0" in data:
        changes["theta_hat0"] = _vector(data["theta_hat0"], model.p, "theta_hat0")

    gains_section = _section(data, "gains", GAIN_KEYS)
    if gains_section:
        gain_changes: Dict[str, Any] = {}
        for key in ("alpha", "K", "beta", "theta_bar"):
            if key in gains_section:
                gain_changes[key] = _number(gains_section[key], f"gains.{key}", positive=True)
        if "Gamma" in gains_section:
            gain_changes["Gamma"] = _matrix(gains_section["Gamma"], model.p, "gains.Gamma")
        try:
            changes["gains"] = replace(scenario.gains, **gain_changes)
        except ControllerError as exc:
            raise ScenarioConfigError(str(exc), "gains") from exc

    bounds_section = _section(data, "bounds", BOUND_KEYS)
    if bounds_section:
        bound_changes = {key: _number(val, f"bounds.{key}", positive=True) for key, val in bounds_section.items()}
        try:
            changes["bounds"] = replace(scenario.bounds, **bound_changes)
        except PlantError as exc:
            raise ScenarioConfigError(str(exc), "bounds") from exc

    baseline_section = _section(data, "baseline", BASELINE_KEYS)
    if baseline_section:
        baseline_changes: Dict[str, Any] = {}
        for key, val in baseline_section.items():
            if key == "gamma" and isinstance(val, list):
                baseline_changes[key] = _matrix(val, model.p, "baseline.gamma")
            else:
                baseline_changes[key] = _number(val, f"baseline.{key}")
        try:
            changes["baseline"] = replace(scenario.baseline, **baseline_changes)
        except ControllerError as exc:
            raise ScenarioConfigError(str(exc), "baseline") from exc

    if not changes:
        return scenario
    try:
        return replace(scenario, **changes)
    except ScenarioError as exc:
        raise ScenarioConfigError(str(exc), "$") from exc


def scenario_to_dict(scenario: Scenario) -> Dict[str, Any]:
    """Обратное к scenario_from_dict: перезагрузка даёт побитово тот же прогон."""
    gains = scenario.gains
    baseline = scenario.baseline
    gamma = baseline.gamma if isinstance(baseline.gamma, float) else np.asarray(baseline.gamma).tolist()
    return {
        "scenario": scenario.name,
        "params": dict(scenario.params),
        "controller": scenario.controller_kind.value,
        "x0": scenario.x0.tolist(),
        "theta_hat0": scenario.theta_hat0.tolist(),
        "horizon": {"t_end": scenario.t_end, "dt": scenario.dt},
        "gains": {
            "alpha": gains.alpha,
            "K": gains.K,
            "beta": gains.beta,
            "Gamma": gains.Gamma.tolist(),
            "theta_bar": gains.theta_bar,
        },
        "bounds": {
            "theta_bar": scenario.bounds.theta_bar,
            "zeta1": scenario.bounds.zeta1,
            "zeta2": scenario.bounds.zeta2,
        },
        "baseline": {
            "k": baseline.k,
            "gamma": gamma,
            "sigma": baseline.sigma,
            "a_bar": baseline.a_bar,
            "d_bar": baseline.d_bar,
        },
    }


def load_scenario(path: str) -> Scenario:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ScenarioConfigError(f"cannot read config: {exc}", path) from exc
    except json.JSONDecodeError as exc:
        raise ScenarioConfigError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}", path) from exc
    return scenario_from_dict(data)


def dump_scenario(scenario: Scenario, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scenario_to_dict(scenario), fh, indent=2, sort_keys=True)
        fh.write("\n")
