"""
Регуляторы для сравнения: градиентный закон с σ-модификацией,
классический градиентный закон (σ = 0) и робастный регулятор
на худшую оценку неопределённости.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from plant.model import ReferenceTrajectory, SystemModel
from plant.regressor import AugmentedRegressor, eval_Y
from services.controller import (
    Branch,
    ControlLaw,
    ControllerInputError,
    ControllerKind,
    FrozenSwitch,
    GainSet,
    StageRates,
)

logger = logging.getLogger(__name__)

GainLike = Union[float, np.ndarray]


@dataclass(frozen=True, eq=False)
class BaselineGains:
    """
    k — обратная связь, gamma — скорость адаптации (число или матрица),
    sigma — утечка, a_bar и d_bar — худшие оценки ‖θ_f‖ и ‖d‖ для робастного закона.
    """

    k: float
    gamma: GainLike
    sigma: float = 0.0
    a_bar: float = 0.0
    d_bar: float = 0.0

    def __post_init__(self) -> None:
        if not self.k > 0:
            raise ControllerInputError(f"baseline k must be positive, got {self.k!r}")
        for label in ("sigma", "a_bar", "d_bar"):
            if not getattr(self, label) >= 0:
                raise ControllerInputError(f"baseline {label} must be nonnegative, got {getattr(self, label)!r}")

        gamma = np.asarray(self.gamma, dtype=float)
        if gamma.ndim == 0:
            if not gamma > 0:
                raise ControllerInputError(f"baseline gamma must be positive, got {self.gamma!r}")
            object.__setattr__(self, "gamma", float(gamma))
            return
        if gamma.ndim != 2 or gamma.shape[0] != gamma.shape[1] or not np.array_equal(gamma, gamma.T):
            raise ControllerInputError("baseline gamma matrix must be square and symmetric")
        if np.min(np.linalg.eigvalsh(gamma)) <= 0:
            raise ControllerInputError("baseline gamma matrix must be positive-definite")
        gamma.setflags(write=False)
        object.__setattr__(self, "gamma", gamma)

    def gamma_matrix(self, p: int) -> np.ndarray:
        if isinstance(self.gamma, float):
            return self.gamma * np.eye(p)
        if self.gamma.shape != (p, p):
            raise ControllerInputError(f"baseline gamma has shape {self.gamma.shape}, expected ({p}, {p})")
        return np.asarray(self.gamma)


def sigma_mod_step(
    e: np.ndarray,
    Y: AugmentedRegressor,
    theta_hat: np.ndarray,
    xd_dot: np.ndarray,
    gains: BaselineGains,
    sigma: Optional[float] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    u = −k·e − Y·θ̂ + ẋ_d,   θ̂̇ = Γ·Yᵀ·e − σ·Γ·θ̂.

    При x_d ≡ 0 на скалярном объекте это ровно θ̂̇ = γx² − γσθ̂.
    """
    if Y.shape != (e.shape[0], theta_hat.shape[0]) or xd_dot.shape != e.shape:
        raise ControllerInputError(
            f"dimension mismatch: e {e.shape}, Y {Y.shape}, theta_hat {theta_hat.shape}, xd_dot {xd_dot.shape}"
        )
    if sigma is None:
        sigma = gains.sigma
    G = gains.gamma_matrix(theta_hat.shape[0])
    u = -gains.k * e - Y @ theta_hat + xd_dot
    theta_hat_dot = G @ (Y.T @ e) - sigma * (G @ theta_hat)
    return u, theta_hat_dot


def robust_step(
    e: np.ndarray,
    yh: np.ndarray,
    xd_dot: np.ndarray,
    gains: BaselineGains,
    direction: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    u = ẋ_d − k·e − (ā·‖Y_h‖₂ + d̄)·e/‖e‖.

    Для S1 при x_d ≡ 0 это −kx − āx. direction — замороженное e/‖e‖ на шаге.
    """
    if direction is None:
        direction = unit_direction(e)
    if xd_dot.shape != e.shape or direction.shape != e.shape:
        raise ControllerInputError(f"dimension mismatch: e {e.shape}, xd_dot {xd_dot.shape}")
    worst = gains.a_bar * float(np.linalg.norm(yh, 2)) + gains.d_bar
    return xd_dot - gains.k * e - worst * direction


def unit_direction(e: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(e))
    if norm == 0.0:
        return np.zeros_like(e)
    return e / norm


# ================== ЗАКОНЫ ДЛЯ СИМУЛЯЦИИ ==================


class SigmaModLaw(ControlLaw):
    """r и V_L пишутся с α сценария; P ≡ 0, μ ≡ 0."""

    kind = ControllerKind.SIGMA_MOD

    def __init__(
        self,
        model: SystemModel,
        reference: ReferenceTrajectory,
        gains: GainSet,
        baseline: BaselineGains,
    ):
        super().__init__(model, reference, gains)
        self.baseline = baseline

    def _sigma(self) -> float:
        return self.baseline.sigma

    def freeze(self, t, x, theta_hat, signals):
        return FrozenSwitch(sign=np.sign(x - signals.xd), branch=Branch.INTERIOR)

    def rates(self, t, x, theta_hat, mu, frozen, signals):
        e = x - signals.xd
        Y = eval_Y(self.model, x, t)
        u, theta_hat_dot = sigma_mod_step(e, Y, theta_hat, signals.xd_dot, self.baseline, sigma=self._sigma())
        x_dot = Y @ signals.theta + u
        r = x_dot - signals.xd_dot + self.gains.alpha * e
        return StageRates(
            u=u, x_dot=x_dot, r=r, theta_hat_dot=theta_hat_dot, mu_dot=np.zeros_like(mu), P_dot=0.0
        )


class GradientLaw(SigmaModLaw):
    kind = ControllerKind.GRADIENT

    def _sigma(self) -> float:
        return 0.0


class RobustLaw(SigmaModLaw):
    """θ̂ не адаптируется: закон работает только на худших оценках ā, d̄."""

    kind = ControllerKind.ROBUST

    def freeze(self, t, x, theta_hat, signals):
        return FrozenSwitch(sign=unit_direction(x - signals.xd), branch=Branch.INTERIOR)

    def rates(self, t, x, theta_hat, mu, frozen, signals):
        e = x - signals.xd
        Y = eval_Y(self.model, x, t)
        u = robust_step(e, Y[:, : self.model.m], signals.xd_dot, self.baseline, direction=frozen.sign)
        x_dot = Y @ signals.theta + u
        r = x_dot - signals.xd_dot + self.gains.alpha * e
        return StageRates(
            u=u,
            x_dot=x_dot,
            r=r,
            theta_hat_dot=np.zeros_like(theta_hat),
            mu_dot=np.zeros_like(mu),
            P_dot=0.0,
        )
