import logging
from dataclasses import dataclass
from typing import Callable, Dict, Optional

import numpy as np

logger = logging.getLogger(__name__)

# f(t) -> вектор; все траектории задаются замкнутыми формулами
TimeFunction = Callable[[float], np.ndarray]
# Y_h(x, t) -> матрица n x m
RegressorFunction = Callable[[np.ndarray, float], np.ndarray]

# Сколько точек горизонта берём при выборочной проверке ограничений
BOUND_CHECK_SAMPLES = 10_000
# Допуск на конечную разность производной θ (ζ₁·(1 + 1e-3))
RATE_CHECK_SLACK = 1e-3
# Округление: ‖(sin t, cos t)‖ может выйти на 1 ulp за 1
REFERENCE_RTOL = 1e-9


class PlantError(Exception):
    pass


class InputDomainError(PlantError):
    pass


class BoundsViolationError(PlantError):
    pass


@dataclass(frozen=True)
class SystemModel:
    """
    Объект управления ẋ = Y_h(x,t)·θ_f(t) + d(t) + u.

    Производные θ_f и d нужны аналитически: по ним считаются N_B
    и константы ζ₁, ζ₂.
    """

    n: int
    m: int
    yh: RegressorFunction
    theta_f: TimeFunction
    d: TimeFunction
    theta_f_dot: TimeFunction
    d_dot: TimeFunction
    theta_f_ddot: TimeFunction
    d_ddot: TimeFunction
    name: str = "custom"

    def __post_init__(self) -> None:
        if not isinstance(self.n, int) or self.n < 1:
            raise PlantError(f"state dimension n must be a positive integer, got {self.n!r}")
        if not isinstance(self.m, int) or self.m < 1:
            raise PlantError(f"parameter dimension m must be a positive integer, got {self.m!r}")

    @property
    def p(self) -> int:
        """Размерность расширенного вектора параметров θ = [θ_f; d]."""
        return self.n + self.m


@dataclass(frozen=True)
class ReferenceTrajectory:
    xd: TimeFunction
    xd_dot: TimeFunction
    xd_ddot: TimeFunction
    xd_bar: float
    delta1: float
    delta2: float

    def __post_init__(self) -> None:
        for label, value in (("xd_bar", self.xd_bar), ("delta1", self.delta1), ("delta2", self.delta2)):
            if not value > 0:
                raise PlantError(f"reference bound {label} must be positive, got {value!r}")


@dataclass(frozen=True)
class ParameterBounds:
    """Известные константы: ‖θ‖ ≤ θ̄, ‖θ̇‖ ≤ ζ₁, ‖θ̈‖ ≤ ζ₂."""

    theta_bar: float
    zeta1: float
    zeta2: float

    def __post_init__(self) -> None:
        for label, value in (("theta_bar", self.theta_bar), ("zeta1", self.zeta1), ("zeta2", self.zeta2)):
            if not (np.isfinite(value) and value > 0):
                raise PlantError(f"parameter bound {label} must be positive, got {value!r}")


def as_state(x, n: int, what: str = "x") -> np.ndarray:
    """
    Приводит вход к float-вектору длины n.
    Бросает InputDomainError на неверную форму или NaN/inf.
    """
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.shape != (n,):
        raise InputDomainError(f"{what} must have shape ({n},), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InputDomainError(f"{what} must be finite, got {arr}")
    return arr


def eval_theta(model: SystemModel, t: float) -> np.ndarray:
    """Расширенный вектор параметров θ(t) = [θ_f(t); d(t)]."""
    return np.concatenate((model.theta_f(t), model.d(t)))


def eval_theta_dot(model: SystemModel, t: float) -> np.ndarray:
    return np.concatenate((model.theta_f_dot(t), model.d_dot(t)))


def eval_theta_ddot(model: SystemModel, t: float) -> np.ndarray:
    return np.concatenate((model.theta_f_ddot(t), model.d_ddot(t)))


def horizon_grid(t_end: float, samples: int = BOUND_CHECK_SAMPLES) -> np.ndarray:
    if t_end <= 0:
        return np.zeros(1)
    return np.linspace(0.0, t_end, samples)


def sampled_sup(fn: TimeFunction, grid: np.ndarray) -> float:
    """sup ‖fn(t)‖ по сетке grid."""
    return float(max(np.linalg.norm(fn(float(t))) for t in grid))


# ================== ВЫБОРОЧНАЯ ПРОВЕРКА ОГРАНИЧЕНИЙ ==================


def check_parameter_bounds(
    model: SystemModel,
    bounds: ParameterBounds,
    t_end: float,
    samples: int = BOUND_CHECK_SAMPLES,
) -> Dict[str, float]:
    """
    Проверяет Assumption-1 на сетке горизонта:
      - sup ‖θ(t)‖ ≤ θ̄;
      - max ‖Δθ/Δt‖ (конечная разность) ≤ ζ₁·(1 + 1e-3).

    Возвращает измеренные величины, при нарушении бросает BoundsViolationError.
    """
    grid = horizon_grid(t_end, samples)
    thetas = np.array([eval_theta(model, float(t)) for t in grid])
    sup_theta = float(np.max(np.linalg.norm(thetas, axis=1)))

    sup_rate = 0.0
    if grid.size > 1:
        rates = np.diff(thetas, axis=0) / np.diff(grid)[:, None]
        sup_rate = float(np.max(np.linalg.norm(rates, axis=1)))

    report = {"sup_theta": sup_theta, "sup_fd_rate": sup_rate}

    if sup_theta > bounds.theta_bar:
        raise BoundsViolationError(
            f"sampled sup ||theta|| = {sup_theta:.6g} exceeds theta_bar = {bounds.theta_bar:.6g}"
        )
    if sup_rate > bounds.zeta1 * (1.0 + RATE_CHECK_SLACK):
        raise BoundsViolationError(
            f"finite-difference ||theta_dot|| = {sup_rate:.6g} exceeds zeta1 = {bounds.zeta1:.6g}"
        )
    return report


def check_reference(
    reference: ReferenceTrajectory,
    t_end: float,
    samples: int = BOUND_CHECK_SAMPLES,
    h: Optional[float] = None,
) -> Dict[str, float]:
    """
    Проверка Assumption-2 и согласованности x_d / ẋ_d:
    центральная разность x_d сравнивается с ẋ_d, ошибка O(h²).
    """
    grid = horizon_grid(t_end, samples)
    if h is None:
        h = 1e-4

    sup_xd = sampled_sup(reference.xd, grid)
    sup_xd_dot = sampled_sup(reference.xd_dot, grid)
    sup_xd_ddot = sampled_sup(reference.xd_ddot, grid)

    fd_error = 0.0
    for t in grid:
        t = float(t)
        fd = (reference.xd(t + h) - reference.xd(t - h)) / (2.0 * h)
        fd_error = max(fd_error, float(np.linalg.norm(fd - reference.xd_dot(t))))

    for label, measured, bound in (
        ("||xd||", sup_xd, reference.xd_bar),
        ("||xd_dot||", sup_xd_dot, reference.delta1),
        ("||xd_ddot||", sup_xd_ddot, reference.delta2),
    ):
        if measured > bound * (1.0 + REFERENCE_RTOL):
            raise BoundsViolationError(f"sampled sup {label} = {measured:.6g} exceeds bound {bound:.6g}")

    return {
        "sup_xd": sup_xd,
        "sup_xd_dot": sup_xd_dot,
        "sup_xd_ddot": sup_xd_ddot,
        "fd_error": fd_error,
    }
