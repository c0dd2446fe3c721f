"""
RISE-подобный адаптивный регулятор для систем ẋ = Y(x,t)θ(t) + u
с меняющимися во времени параметрами.

  u      = −Y_d·θ̂ − α·e + ẋ_d + μ
  θ̂̇     = proj(Λ₀),   Λ₀ = ΓY_dᵀ(Y_dΓY_dᵀ)⁻¹·β·sgn(e)
  μ̇      = −K·r                     (внутри шара)
  μ̇      = −K·r − Y_d·(Λ₀ − Λ₁)     (на границе, проекция активна)

Обе ветки (θ̂̇ и μ̇) переключаются по ОДНОМУ и тому же условию.
"""

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Dict, NamedTuple, Optional, Tuple

import numpy as np
from scipy.linalg import LinAlgError, block_diag, cho_factor, cho_solve

from plant.model import ReferenceTrajectory, SystemModel, eval_theta, eval_theta_dot
from plant.regressor import AugmentedRegressor, eval_Y, eval_Yd

if TYPE_CHECKING:
    from services.simulation import TrajectoryRecord

logger = logging.getLogger(__name__)

# Запас гарантии проекции: ‖θ̂‖ ≤ θ̄·(1 + PROJECTION_EPS)
PROJECTION_EPS = 1e-9
# Утолщение сферы ‖θ̂‖ = θ̄ для численной проверки границы
BOUNDARY_TOL = 1e-12
# Выше этого числа обусловленности Y_dΓY_dᵀ считаем вырожденной
MAX_CONDITION = 1e12


class ControllerError(Exception):
    pass


class ControllerInputError(ControllerError):
    pass


class RegressorConditioningError(ControllerError):
    pass


class InvariantError(ControllerError):
    pass


class ControllerKind(str, Enum):
    RISE = "rise"
    SIGMA_MOD = "sigma_mod"
    ROBUST = "robust"
    GRADIENT = "gradient"


class Branch(str, Enum):
    INTERIOR = "interior"
    BOUNDARY = "boundary"


def block_gamma(gamma1, gamma2) -> np.ndarray:
    """Γ = diag(Γ₁, Γ₂); скаляры превращаются в c·I нужной размерности не здесь, а у вызывающего."""
    return block_diag(np.atleast_2d(gamma1), np.atleast_2d(gamma2)).astype(float)


@dataclass(frozen=True, eq=False)
class GainSet:
    """
    Коэффициенты регулятора.

    m — размерность θ_f: по ней Γ делится на блоки Γ₁ (m x m) и Γ₂ (n x n).
    K ≤ 1/2 допускается (для проверки λ₃ ≤ 0), но такой прогон не сертифицируется.
    """

    alpha: float
    K: float
    beta: float
    Gamma: np.ndarray
    theta_bar: float
    m: int

    def __post_init__(self) -> None:
        for label in ("alpha", "K", "beta", "theta_bar"):
            value = getattr(self, label)
            if not (np.isfinite(value) and value > 0):
                raise ControllerInputError(f"gain {label} must be positive, got {value!r}")

        G = np.array(self.Gamma, dtype=float)
        if G.ndim != 2 or G.shape[0] != G.shape[1]:
            raise ControllerInputError(f"Gamma must be square, got shape {G.shape}")
        if not (0 < self.m < G.shape[0]):
            raise ControllerInputError(f"m={self.m} does not split Gamma of size {G.shape[0]}")
        if not np.array_equal(G, G.T):
            raise ControllerInputError("Gamma must be symmetric")
        m = self.m
        if np.any(G[:m, m:] != 0.0) or np.any(G[m:, :m] != 0.0):
            raise ControllerInputError("Gamma must be block diagonal: off-diagonal blocks must be exactly zero")
        if np.min(np.linalg.eigvalsh(G)) <= 0:
            raise ControllerInputError("Gamma must be positive-definite")
        G.setflags(write=False)
        object.__setattr__(self, "Gamma", G)

        if self.K <= 0.5:
            logger.warning("K=%.4g <= 1/2: lambda3 = min(alpha, K - 1/2) is not positive", self.K)

    @property
    def p(self) -> int:
        return self.Gamma.shape[0]

    @property
    def n(self) -> int:
        return self.p - self.m

    @property
    def gamma2(self) -> np.ndarray:
        return self.Gamma[self.m:, self.m:]

    @property
    def lambda_min_gamma2(self) -> float:
        return float(np.min(np.linalg.eigvalsh(self.gamma2)))

    @property
    def gamma_norm(self) -> float:
        return float(np.linalg.norm(self.Gamma, 2))

    @property
    def lambda3(self) -> float:
        """λ₃ = min{α, K − 1/2}."""
        return min(self.alpha, self.K - 0.5)


@dataclass
class ControllerState:
    """Состояние адаптации; меняет его только шаг симуляции, которому оно принадлежит."""

    theta_hat: np.ndarray
    mu: np.ndarray
    last_branch: Branch = Branch.INTERIOR


class TimeSignals(NamedTuple):
    """Величины, зависящие только от t; симуляция кэширует их по времени."""

    xd: np.ndarray
    xd_dot: np.ndarray
    Yd: AugmentedRegressor
    Yd_dot: AugmentedRegressor
    theta: np.ndarray
    theta_dot: np.ndarray
    # Y_d·θ̇ + Ẏ_d·θ: часть N_B, не зависящая от θ̂
    nb_known: np.ndarray


class FrozenSwitch(NamedTuple):
    """sgn(e) и ветка проекции, вычисленные в начале шага и замороженные на его стадиях."""

    sign: np.ndarray
    branch: Branch


class StageRates(NamedTuple):
    u: np.ndarray
    x_dot: np.ndarray
    r: np.ndarray
    theta_hat_dot: np.ndarray
    mu_dot: np.ndarray
    P_dot: float


# ================== ОШИБКИ СЛЕЖЕНИЯ ==================


def _same_shape(*arrays: np.ndarray) -> None:
    shape = arrays[0].shape
    for arr in arrays[1:]:
        if arr.shape != shape:
            raise ControllerInputError(f"dimension mismatch: {shape} vs {arr.shape}")


def tracking_error(x: np.ndarray, xd: np.ndarray) -> np.ndarray:
    """e = x − x_d."""
    x = np.asarray(x, dtype=float)
    xd = np.asarray(xd, dtype=float)
    _same_shape(x, xd)
    return x - xd


def filtered_error_from_closed_loop(
    e: np.ndarray,
    Y: AugmentedRegressor,
    theta: np.ndarray,
    u: np.ndarray,
    xd_dot: np.ndarray,
    alpha: float,
) -> np.ndarray:
    """r = Yθ + u − ẋ_d + αe (ė известна в симуляции точно)."""
    if Y.shape != (e.shape[0], theta.shape[0]):
        raise ControllerInputError(f"regressor shape {Y.shape} does not match e {e.shape} / theta {theta.shape}")
    _same_shape(e, u, xd_dot)
    return Y @ theta + u - xd_dot + alpha * e


def filtered_error_from_rate(e_dot: np.ndarray, e: np.ndarray, alpha: float) -> np.ndarray:
    """r = ė + αe."""
    _same_shape(e_dot, e)
    return e_dot + alpha * e


def sgn(e: np.ndarray) -> np.ndarray:
    # sgn(0) = 0: из отрезка [-1, 1] выбираем центр
    return np.sign(e)


def control_input(
    Yd: AugmentedRegressor,
    theta_hat: np.ndarray,
    e: np.ndarray,
    xd_dot: np.ndarray,
    mu: np.ndarray,
    alpha: float,
) -> np.ndarray:
    """u = −Y_d·θ̂ − α·e + ẋ_d + μ."""
    if Yd.shape != (e.shape[0], theta_hat.shape[0]):
        raise ControllerInputError(f"Yd shape {Yd.shape} does not match e {e.shape} / theta_hat {theta_hat.shape}")
    _same_shape(e, xd_dot, mu)
    return -(Yd @ theta_hat) - alpha * e + xd_dot + mu


# ================== ЗАКОН АДАПТАЦИИ ==================


def lambda0_weight(Yd: AugmentedRegressor, gains: GainSet) -> np.ndarray:
    """
    W = ΓY_dᵀ(Y_dΓY_dᵀ)⁻¹, так что Λ₀ = W·β·sgn(e).

    При единичном блоке в Y_d и Γ₂ ≻ 0 матрица Y_dΓY_dᵀ положительно определена; если разложение
    Холецкого не проходит или оценка обусловленности больше 1e12,
    бросается RegressorConditioningError.
    """
    GYt = gains.Gamma @ Yd.T
    M = Yd @ GYt
    try:
        c, lower = cho_factor(M, lower=True, check_finite=False)
    except LinAlgError as exc:
        raise RegressorConditioningError(f"Yd Gamma Yd^T is not positive-definite: {exc}") from exc

    diag = np.abs(np.diag(c))
    if diag.min() == 0.0 or (diag.max() / diag.min()) ** 2 > MAX_CONDITION:
        raise RegressorConditioningError("Yd Gamma Yd^T is ill-conditioned (condition estimate above 1e12)")

    return GYt @ cho_solve((c, lower), np.eye(Yd.shape[0]), check_finite=False)


def lambda0(
    Yd: AugmentedRegressor,
    e: np.ndarray,
    gains: GainSet,
    sign: Optional[np.ndarray] = None,
    weight: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Λ₀ = ΓY_dᵀ(Y_dΓY_dᵀ)⁻¹·β·sgn(e).

    sign — уже замороженный sgn(e), weight — готовая W для этого Y_d.
    """
    s = sgn(e) if sign is None else sign
    if not np.any(s):
        return np.zeros(Yd.shape[1])
    if weight is None:
        weight = lambda0_weight(Yd, gains)
    return weight @ (gains.beta * s)


def boundary_function(theta: np.ndarray, theta_bar: float) -> float:
    """f(θ) = θᵀθ − θ̄²: f < 0 внутри шара, f = 0 на сфере."""
    return float(theta @ theta) - theta_bar * theta_bar


def grad_f(theta_hat: np.ndarray) -> np.ndarray:
    return 2.0 * theta_hat


def select_branch(theta_hat: np.ndarray, Lambda0: np.ndarray, theta_bar: float) -> Branch:
    """Общее условие переключения для θ̂̇ и μ̇."""
    norm = math.sqrt(float(theta_hat @ theta_hat))
    if norm >= theta_bar * (1.0 - BOUNDARY_TOL) and float(grad_f(theta_hat) @ Lambda0) > 0.0:
        return Branch.BOUNDARY
    return Branch.INTERIOR


def lambda1(theta_hat: np.ndarray, Lambda0: np.ndarray) -> np.ndarray:
    """Λ₁ = (I − ∇f∇fᵀ/‖∇f‖²)·Λ₀ — касательная к сфере составляющая."""
    g = grad_f(theta_hat)
    gg = float(g @ g)
    if gg == 0.0:
        raise InvariantError("zero gradient of the boundary function on the Boundary branch")
    return Lambda0 - g * (float(g @ Lambda0) / gg)


def project_update(
    theta_hat: np.ndarray,
    Lambda0: np.ndarray,
    gains: GainSet,
    branch: Optional[Branch] = None,
) -> Tuple[np.ndarray, Branch]:
    """
    θ̂̇ = proj(Λ₀).

    Если branch не передан — выбирается по условию; иначе используется
    замороженная в начале шага ветка.
    """
    if branch is None:
        branch = select_branch(theta_hat, Lambda0, gains.theta_bar)
    if branch is Branch.INTERIOR:
        return Lambda0, branch
    return lambda1(theta_hat, Lambda0), branch


def mu_dot(
    branch: Branch,
    r: np.ndarray,
    Yd: AugmentedRegressor,
    Lambda0: np.ndarray,
    Lambda1: np.ndarray,
    gains: GainSet,
) -> np.ndarray:
    """
    μ̇ = −K·r внутри; μ̇ = −K·r − Y_d(Λ₀ − Λ₁) на границе.

    Lambda1 — то, что вернул project_update в тот же момент. Для ветки
    Interior оно обязано совпадать с Λ₀, иначе ветки рассинхронизированы.
    """
    mu0 = -gains.K * r
    if branch is Branch.INTERIOR:
        if Lambda1 is not Lambda0 and not np.array_equal(Lambda1, Lambda0):
            raise InvariantError("branch mismatch: Interior mu_dot with a projected theta_hat_dot")
        return mu0
    return mu0 - Yd @ (Lambda0 - Lambda1)


def nb_signal(
    Yd: AugmentedRegressor,
    Yd_dot: AugmentedRegressor,
    theta: np.ndarray,
    theta_dot: np.ndarray,
    theta_hat: np.ndarray,
) -> np.ndarray:
    """N_B = Y_d·θ̇ + Ẏ_d·θ − Ẏ_d·θ̂."""
    return Yd @ theta_dot + Yd_dot @ (theta - theta_hat)


# ================== ЗАКОНЫ УПРАВЛЕНИЯ ДЛЯ СИМУЛЯЦИИ ==================


class ControlLaw(ABC):
    """
    Общий интерфейс регулятора для интегратора.

    freeze() вызывается один раз в начале шага, rates() — на каждой стадии RK4.
    """

    kind: ControllerKind

    def __init__(self, model: SystemModel, reference: ReferenceTrajectory, gains: GainSet):
        self.model = model
        self.reference = reference
        self.gains = gains

    @abstractmethod
    def freeze(self, t: float, x: np.ndarray, theta_hat: np.ndarray, signals: TimeSignals) -> FrozenSwitch:
        pass

    @abstractmethod
    def rates(
        self,
        t: float,
        x: np.ndarray,
        theta_hat: np.ndarray,
        mu: np.ndarray,
        frozen: FrozenSwitch,
        signals: TimeSignals,
    ) -> StageRates:
        pass

    def initial_P(self, x: np.ndarray, theta_hat: np.ndarray, signals: TimeSignals) -> float:
        return 0.0


class RiseLaw(ControlLaw):
    kind = ControllerKind.RISE

    # W зависит только от t: стадии RK4 с одинаковым временем делят одно разложение
    WEIGHT_CACHE_SIZE = 8

    def __init__(self, model: SystemModel, reference: ReferenceTrajectory, gains: GainSet):
        super().__init__(model, reference, gains)
        self._weights: Dict[float, np.ndarray] = {}

    def _weight(self, t: float, Yd: AugmentedRegressor) -> np.ndarray:
        weight = self._weights.get(t)
        if weight is None:
            weight = lambda0_weight(Yd, self.gains)
            if len(self._weights) >= self.WEIGHT_CACHE_SIZE:
                self._weights.pop(next(iter(self._weights)))
            self._weights[t] = weight
        return weight

    def freeze(self, t, x, theta_hat, signals):
        s = sgn(x - signals.xd)
        L0 = lambda0(signals.Yd, s, self.gains, sign=s, weight=self._weight(t, signals.Yd))
        branch = select_branch(theta_hat, L0, self.gains.theta_bar)
        return FrozenSwitch(sign=s, branch=branch)

    def rates(self, t, x, theta_hat, mu, frozen, signals):
        g = self.gains
        e = x - signals.xd
        Y = eval_Y(self.model, x, t)
        u = control_input(signals.Yd, theta_hat, e, signals.xd_dot, mu, g.alpha)
        x_dot = Y @ signals.theta + u
        r = filtered_error_from_closed_loop(e, Y, signals.theta, u, signals.xd_dot, g.alpha)

        # Λ₀ считается один раз и идёт и в θ̂̇, и в μ̇
        L0 = lambda0(signals.Yd, e, g, sign=frozen.sign, weight=self._weight(t, signals.Yd))
        theta_hat_dot, branch = project_update(theta_hat, L0, g, branch=frozen.branch)
        m_dot = mu_dot(branch, r, signals.Yd, L0, theta_hat_dot, g)

        NB = signals.nb_known - signals.Yd_dot @ theta_hat
        P_dot = -float(r @ (NB - g.beta * frozen.sign))
        return StageRates(u=u, x_dot=x_dot, r=r, theta_hat_dot=theta_hat_dot, mu_dot=m_dot, P_dot=P_dot)

    def initial_P(self, x, theta_hat, signals):
        """P(0) = β·Σ|e_i(0)| − e(0)ᵀN_B(0)."""
        e = x - signals.xd
        NB = nb_signal(signals.Yd, signals.Yd_dot, signals.theta, signals.theta_dot, theta_hat)
        return float(self.gains.beta * np.sum(np.abs(e)) - e @ NB)


# ================== ДИАГНОСТИКА ЗАМКНУТОЙ СИСТЕМЫ ==================


def closed_loop_r_dot_check(
    record: "TrajectoryRecord",
    model: SystemModel,
    reference: ReferenceTrajectory,
    gains: GainSet,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Невязка между конечной разностью r(t) и правой частью
    ṙ = (Ẏ−Ẏ_d)θ + (Y−Y_d)θ̇ + Ẏ_dθ̃ + Y_dθ̇ − β·sgn(e) − K·r.

    Ẏ и Ẏ_d — разности вперёд по записанной траектории, поэтому невязка O(dt).
    Возвращает (невязки по шагам, маска годных шагов); шаги со сменой
    ветки проекции или знака e исключаются.
    """
    count = len(record.t) - 1
    if count < 1:
        return np.zeros(0), np.zeros(0, dtype=bool)

    dt = record.dt
    residual = np.zeros(count)
    Y_prev = eval_Y(model, record.x[0], float(record.t[0]))
    Yd_prev = eval_Yd(model, reference, float(record.t[0]))

    for k in range(count):
        t0 = float(record.t[k])
        t1 = float(record.t[k + 1])
        Y_next = eval_Y(model, record.x[k + 1], t1)
        Yd_next = eval_Yd(model, reference, t1)

        theta = eval_theta(model, t0)
        theta_dot = eval_theta_dot(model, t0)
        Y_dot = (Y_next - Y_prev) / dt
        Yd_dot = (Yd_next - Yd_prev) / dt
        theta_tilde = theta - record.theta_hat[k]

        rhs = (
            (Y_dot - Yd_dot) @ theta
            + (Y_prev - Yd_prev) @ theta_dot
            + Yd_dot @ theta_tilde
            + Yd_prev @ theta_dot
            - gains.beta * sgn(record.e[k])
            - gains.K * record.r[k]
        )
        r_fd = (record.r[k + 1] - record.r[k]) / dt
        residual[k] = float(np.linalg.norm(r_fd - rhs))

        Y_prev, Yd_prev = Y_next, Yd_next

    signs = np.sign(record.e)
    sign_change = np.any(signs[1:] != signs[:-1], axis=1)
    mask = ~(record.switching[1:] | record.switching[:-1] | sign_change)
    return residual, mask
