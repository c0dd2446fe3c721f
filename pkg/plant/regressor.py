import logging
from typing import Optional

import numpy as np

from .model import InputDomainError, ReferenceTrajectory, SystemModel

logger = logging.getLogger(__name__)

# Ȳ_d берём с запасом (1 + 1e-6) от максимума по сетке
YD_BAR_MARGIN = 1e-6
# Больше точек для Ȳ_d не берём даже на длинном горизонте
MAX_YD_BAR_SAMPLES = 200_000

# Плотная матрица n x (n+m); структура [Y_h | I_n]
AugmentedRegressor = np.ndarray


def eval_Y(model: SystemModel, x: np.ndarray, t: float) -> AugmentedRegressor:
    """
    Расширенный регрессор Y(x,t) = [Y_h(x,t) | I_n].

    Y(x,t)·θ(t) = h(x,t) + d(t) с θ из eval_theta.
    """
    if not np.all(np.isfinite(x)):
        raise InputDomainError(f"state must be finite, got {x}")

    n, m = model.n, model.m
    yh = np.asarray(model.yh(x, t), dtype=float)
    if yh.shape != (n, m):
        raise InputDomainError(f"Y_h must have shape ({n}, {m}), got {yh.shape}")
    if not np.all(np.isfinite(yh)):
        raise InputDomainError(f"Y_h is not finite at x={x}, t={t}")

    Y = np.zeros((n, n + m))
    Y[:, :m] = yh
    Y[:, m:] = np.eye(n)
    return Y


def eval_Yd(model: SystemModel, reference: ReferenceTrajectory, t: float) -> AugmentedRegressor:
    """Желаемый регрессор Y_d(t) = Y(x_d(t), t)."""
    return eval_Y(model, reference.xd(t), t)


def eval_Yd_dot(
    model: SystemModel,
    reference: ReferenceTrajectory,
    t: float,
    h: float,
) -> AugmentedRegressor:
    """
    Ẏ_d центральной разностью с шагом h.
    У самого нуля (t < h) берём односторонний шаблон второго порядка,
    чтобы не выходить за t = 0.
    """
    if t < h:
        y0 = eval_Yd(model, reference, t)
        y1 = eval_Yd(model, reference, t + h)
        y2 = eval_Yd(model, reference, t + 2.0 * h)
        return (-3.0 * y0 + 4.0 * y1 - y2) / (2.0 * h)
    return (eval_Yd(model, reference, t + h) - eval_Yd(model, reference, t - h)) / (2.0 * h)


def eval_Yd_ddot(
    model: SystemModel,
    reference: ReferenceTrajectory,
    t: float,
    h: float,
) -> AugmentedRegressor:
    if t < h:
        t = h
    return (
        eval_Yd(model, reference, t + h) - 2.0 * eval_Yd(model, reference, t) + eval_Yd(model, reference, t - h)
    ) / (h * h)


def has_augmented_structure(Y: np.ndarray, n: int, m: int) -> bool:
    """Правый блок n x n — ровно единичная матрица, все элементы конечны."""
    if Y.shape != (n, n + m):
        return False
    return bool(np.all(np.isfinite(Y)) and np.array_equal(Y[:, m:], np.eye(n)))


def estimate_Yd_bar(
    model: SystemModel,
    reference: ReferenceTrajectory,
    t_end: float,
    dt: float,
    resolution: Optional[float] = None,
) -> float:
    """
    Оценка Ȳ_d = sup ‖Y_d(t)‖₂ по горизонту.

    Сетка с шагом dt/10 (или resolution), но не более MAX_YD_BAR_SAMPLES точек;
    максимум спектральной нормы умножается на (1 + 1e-6).
    """
    step = resolution if resolution is not None else dt / 10.0
    if t_end <= 0:
        count = 1
    else:
        count = min(int(np.ceil(t_end / step)) + 1, MAX_YD_BAR_SAMPLES)
    grid = np.linspace(0.0, t_end, count) if count > 1 else np.zeros(1)

    stack = np.array([eval_Yd(model, reference, float(t)) for t in grid])
    norms = np.linalg.norm(stack, ord=2, axis=(1, 2))
    yd_bar = float(np.max(norms)) * (1.0 + YD_BAR_MARGIN)
    logger.debug("Yd_bar=%.9g from %d samples", yd_bar, count)
    return yd_bar
