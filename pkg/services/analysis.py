"""
Проверки гарантий регулятора по готовым траекториям.

Здесь только постобработка: ничего в этом модуле не влияет на управление.
"""

import logging
import math
from dataclasses import asdict, dataclass
from typing import TYPE_CHECKING, Any, Dict, Optional, Tuple

import numpy as np

from plant.model import ReferenceTrajectory, SystemModel, eval_theta, eval_theta_ddot, eval_theta_dot, horizon_grid
from plant.regressor import estimate_Yd_bar, eval_Y, eval_Yd, eval_Yd_ddot, eval_Yd_dot
from services.controller import ControllerKind, GainSet, grad_f

if TYPE_CHECKING:
    from plant.scenarios import Scenario
    from services.simulation import TrajectoryRecord

logger = logging.getLogger(__name__)

# Запас к выборочным супремумам ‖N_B‖ и ‖Ṅ_B‖
NB_SAFETY = 1.1
NB_SAMPLES = 10_000
# Шаг конечной разности для Ẏ_d, Ÿ_d при оценке γ₁, γ₂
NB_FD_STEP = 1e-4

# Минимальное β, которое отдаёт compliant_beta
BETA_FLOOR = 0.1
COMPLIANT_MARGIN = 1.5

LEMMA1_SLACK = 1e-9
COROLLARY1_SLACK = 1e-3
P_TOL = 1e-6
V_L_STEP_TOL = 1e-8
BALL_TOL = 1e-6
TANGENCY_TOL = 1e-9
IDENTITY_TOL = 1e-10
# Для подгонки c берём только шаги с ‖z‖² не меньше этого порога
C_FIT_MIN_Z2 = 1e-2
# Ниже этого ‖z‖ отношение ‖Ñ‖/‖z‖ не считаем
RHO_MIN_Z = 1e-6

# Нарушение любого из них в `run` даёт код выхода 2; `verify` смотрит на все проверки
RUN_CERTIFICATES = ("gain_condition", "P_nonnegative", "projection_ball", "corollary1", "lambda3_positive")


class Lemma1ViolationError(Exception):
    pass


@dataclass(frozen=True)
class BoundReport:
    gamma1: float
    gamma2: float
    gamma3: float
    Yd_bar: float
    lemma1_bound: float
    gain_condition_met: bool
    beta_required: float
    margin: float

    def as_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class Lemma1Result:
    inverse_norm: float
    bound: float
    passed: bool


# ================== γ₁, γ₂ И УСЛОВИЕ НА УСИЛЕНИЯ ==================


def nb_bounds(
    model: SystemModel,
    reference: ReferenceTrajectory,
    theta_bar: float,
    t_end: float,
    samples: int = NB_SAMPLES,
    h: float = NB_FD_STEP,
) -> Tuple[float, float]:
    """
    Выборочные оценки γ₁ ≥ sup‖N_B‖ и γ₂ ≥ sup‖Ṅ_B‖.

    θ̂ берётся в худшем положении на шаре ‖θ̂‖ = θ̄:
      ‖N_B‖  ≤ ‖Y_dθ̇ + Ẏ_dθ‖ + ‖Ẏ_d‖₂·θ̄
      ‖Ṅ_B‖ ≤ ‖2Ẏ_dθ̇ + Y_dθ̈ + Ÿ_dθ‖ + ‖Ÿ_d‖₂·θ̄
    Вклад Ẏ_d·θ̂̇ в Ṅ_B сюда не входит: он зависит от β.
    """
    sup1 = 0.0
    sup2 = 0.0
    for t in horizon_grid(t_end, samples):
        t = float(t)
        Yd = eval_Yd(model, reference, t)
        Yd_dot = eval_Yd_dot(model, reference, t, h)
        Yd_ddot = eval_Yd_ddot(model, reference, t, h)
        theta = eval_theta(model, t)
        theta_dot = eval_theta_dot(model, t)
        theta_ddot = eval_theta_ddot(model, t)

        known1 = Yd @ theta_dot + Yd_dot @ theta
        known2 = 2.0 * (Yd_dot @ theta_dot) + Yd @ theta_ddot + Yd_ddot @ theta
        sup1 = max(sup1, float(np.linalg.norm(known1)) + float(np.linalg.norm(Yd_dot, 2)) * theta_bar)
        sup2 = max(sup2, float(np.linalg.norm(known2)) + float(np.linalg.norm(Yd_ddot, 2)) * theta_bar)

    return NB_SAFETY * sup1, NB_SAFETY * sup2


def estimate_NB_bounds(scenario: "Scenario") -> Tuple[float, float]:
    return nb_bounds(scenario.model, scenario.reference, scenario.gains.theta_bar, scenario.t_end)


def compliant_beta(
    gamma1: float,
    gamma2: float,
    alpha: float,
    margin: float = COMPLIANT_MARGIN,
    floor: float = BETA_FLOOR,
) -> float:
    """β = margin·(γ₁ + γ₂/α), но не меньше floor."""
    return max(margin * (gamma1 + gamma2 / alpha), floor)


def gamma3_bound(gains: GainSet, Yd_bar: float) -> float:
    """
    γ₃ = β·√n·‖Γ‖₂·Ȳ_d / λ_min{Γ₂}.

    √n — это ‖sgn(e)‖ в худшем случае; для скалярного объекта множитель равен 1.
    """
    return gains.beta * math.sqrt(gains.n) * gains.gamma_norm * Yd_bar / gains.lambda_min_gamma2


def bound_report(scenario: "Scenario", Yd_bar: Optional[float] = None) -> BoundReport:
    gains = scenario.gains
    gamma1, gamma2 = estimate_NB_bounds(scenario)
    if Yd_bar is None:
        Yd_bar = estimate_Yd_bar(scenario.model, scenario.reference, scenario.t_end, scenario.dt)
    beta_required = gamma1 + gamma2 / gains.alpha
    met = gains.beta > beta_required
    report = BoundReport(
        gamma1=gamma1,
        gamma2=gamma2,
        gamma3=gamma3_bound(gains, Yd_bar),
        Yd_bar=Yd_bar,
        lemma1_bound=1.0 / gains.lambda_min_gamma2,
        gain_condition_met=met,
        beta_required=beta_required,
        margin=gains.beta - beta_required,
    )
    if not met:
        logger.warning(
            "gain condition violated on %s: beta=%.6g <= gamma1 + gamma2/alpha = %.6g",
            scenario.name, gains.beta, beta_required,
        )
    return report


def check_gain_condition(gains: GainSet, report: BoundReport) -> Tuple[bool, float]:
    """β > γ₁ + γ₂/α (строго) и запас β − (γ₁ + γ₂/α)."""
    required = report.gamma1 + report.gamma2 / gains.alpha
    return gains.beta > required, gains.beta - required


# ================== ОЦЕНКА (Y_dΓY_dᵀ)⁻¹ И СКОРОСТЬ θ̂ ==================


def lemma1_check(Yd: np.ndarray, Gamma: np.ndarray, m: int) -> Lemma1Result:
    """
    Y_dΓY_dᵀ положительно определена и ‖(Y_dΓY_dᵀ)⁻¹‖₂ ≤ 1/λ_min{Γ₂}.
    """
    Yd = np.asarray(Yd, dtype=float)
    Gamma = np.asarray(Gamma, dtype=float)
    M = Yd @ Gamma @ Yd.T
    M = 0.5 * (M + M.T)
    eig = np.linalg.eigvalsh(M)
    if eig[0] <= 0:
        raise Lemma1ViolationError(f"Yd Gamma Yd^T is not positive-definite (min eigenvalue {eig[0]:.3g})")

    inverse_norm = 1.0 / float(eig[0])
    bound = 1.0 / float(np.min(np.linalg.eigvalsh(Gamma[m:, m:])))
    passed = inverse_norm <= bound + LEMMA1_SLACK * max(1.0, bound)
    return Lemma1Result(inverse_norm=inverse_norm, bound=bound, passed=passed)


def _random_spd(rng: np.random.Generator, size: int) -> np.ndarray:
    A = rng.uniform(-5.0, 5.0, size=(size, size))
    return A.T @ A + 0.1 * np.eye(size)


def lemma1_randomized(seed: int, draws: int = 1000, max_dim: int = 3) -> Dict[str, Any]:
    """
    Случайные (Y_h, Γ₁, Γ₂): элементы Y_h из [−5, 5], блоки Γ вида AᵀA + 0.1I.
    Размерности n, m тоже случайные, от 1 до max_dim.
    """
    rng = np.random.default_rng(seed)
    failures = 0
    worst_ratio = 0.0
    for _ in range(draws):
        n = int(rng.integers(1, max_dim + 1))
        m = int(rng.integers(1, max_dim + 1))
        Yh = rng.uniform(-5.0, 5.0, size=(n, m))
        Y = np.hstack((Yh, np.eye(n)))
        Gamma = np.zeros((n + m, n + m))
        Gamma[:m, :m] = _random_spd(rng, m)
        Gamma[m:, m:] = _random_spd(rng, n)

        result = lemma1_check(Y, Gamma, m)
        worst_ratio = max(worst_ratio, result.inverse_norm / result.bound)
        if not result.passed:
            failures += 1

    return {"seed": seed, "draws": draws, "failures": failures, "worst_ratio": worst_ratio, "passed": failures == 0}


def corollary1_check(record: "TrajectoryRecord", gains: GainSet, Yd_bar: float) -> Dict[str, Any]:
    """sup ‖Δθ̂/Δt‖ по записи против γ₃·(1 + 1e-3)."""
    gamma3 = gamma3_bound(gains, Yd_bar)
    if len(record.t) < 2:
        return {"gamma3": gamma3, "measured": 0.0, "worst_index": 0, "passed": True}

    rates = np.linalg.norm(np.diff(record.theta_hat, axis=0), axis=1) / record.dt
    worst = int(np.argmax(rates))
    measured = float(rates[worst])
    return {
        "gamma3": gamma3,
        "measured": measured,
        "measured_rhs": float(np.max(np.linalg.norm(record.theta_hat_dot, axis=1))),
        "worst_index": worst,
        "passed": measured <= gamma3 * (1.0 + COROLLARY1_SLACK),
    }


# ================== ЛЯПУНОВ ==================


def _z_norm2(record: "TrajectoryRecord") -> np.ndarray:
    return np.sum(record.e ** 2, axis=1) + np.sum(record.r ** 2, axis=1)


def lyapunov_report(record: "TrajectoryRecord", gains: GainSet) -> Dict[str, Any]:
    """
    min P, наибольший рост V_L за шаг, скорость спада log V_L, λ₃,
    наилучшее c > 0 в V_L(t+dt) − V_L(t) ≤ −c‖z‖²dt и ρ̂ = sup ‖Ñ‖/‖z‖.
    """
    V = record.V_L
    dV = np.diff(V)
    z2 = _z_norm2(record)
    lambda3 = gains.lambda3

    max_increase = float(np.max(dV)) if dV.size else 0.0

    decay_rate = None
    positive = V > 1e-12
    if np.count_nonzero(positive) >= 2:
        slope, _ = np.polyfit(record.t[positive], np.log(V[positive]), 1)
        decay_rate = float(-slope)

    c_fit = None
    usable = z2[:-1] >= C_FIT_MIN_Z2
    if dV.size and np.any(usable):
        c_fit = float(np.min(-dV[usable] / (z2[:-1][usable] * record.dt)))

    z = np.sqrt(z2)
    n_tilde = np.linalg.norm(record.n_tilde, axis=1)
    away = z > RHO_MIN_Z
    rho_hat = float(np.max(n_tilde[away] / z[away])) if np.any(away) else 0.0
    near = ~away
    n_tilde_small_z = float(np.max(n_tilde[near])) if np.any(near) else None

    # V̇_L = rᵀÑ − K‖r‖² − α‖e‖²: слагаемое со знаком сокращается между ṙ и Ṗ
    identity_rate = (
        np.sum(record.r * record.n_tilde, axis=1)
        - gains.K * np.sum(record.r ** 2, axis=1)
        - gains.alpha * np.sum(record.e ** 2, axis=1)
    )
    identity_gap = None
    if dV.size:
        midpoint = 0.5 * (identity_rate[1:] + identity_rate[:-1])
        identity_gap = float(np.max(np.abs(dV / record.dt - midpoint)))

    monotone = max_increase <= V_L_STEP_TOL
    return {
        "min_P": float(np.min(record.P)),
        "max_step_increase": max_increase,
        "monotone": monotone,
        "log_decay_rate": decay_rate,
        "lambda3": lambda3,
        "lambda3_positive": lambda3 > 0,
        "c_fit": c_fit,
        "decay_certified": bool(monotone and c_fit is not None and c_fit > 0),
        "rho_hat": rho_hat,
        "roa_certificate": lambda3 >= 0.5 * rho_hat ** 2,
        "n_tilde_at_small_z": n_tilde_small_z,
        "derivative_identity_gap": identity_gap,
    }


# ================== ИНВАРИАНТЫ ТРАЕКТОРИИ ==================


def identity_residual(record: "TrajectoryRecord", model: SystemModel, reference: ReferenceTrajectory) -> float:
    """max ‖r − [(Y−Y_d)θ + Y_dθ̃ + μ]‖ по всем отсчётам."""
    worst = 0.0
    for k in range(len(record.t)):
        t = float(record.t[k])
        Y = eval_Y(model, record.x[k], t)
        Yd = eval_Yd(model, reference, t)
        rebuilt = (Y - Yd) @ record.theta[k] + Yd @ record.theta_tilde[k] + record.mu[k]
        worst = max(worst, float(np.linalg.norm(record.r[k] - rebuilt)))
    return worst


def projection_report(record: "TrajectoryRecord", theta_bar: float) -> Dict[str, Any]:
    norms = np.linalg.norm(record.theta_hat, axis=1)
    tangency = 0.0
    if np.any(record.boundary):
        th = record.theta_hat[record.boundary]
        rates = record.theta_hat_dot[record.boundary]
        tangency = float(np.max(np.sum(grad_f(th) * rates, axis=1)))
    sup_norm = float(np.max(norms))
    return {
        "sup_theta_hat": sup_norm,
        "theta_bar": theta_bar,
        "in_ball": sup_norm <= theta_bar + BALL_TOL,
        "max_outward_rate": tangency,
        "tangent": tangency <= TANGENCY_TOL,
        "boundary_samples": int(np.count_nonzero(record.boundary)),
        "switches": int(np.count_nonzero(record.switching)),
    }


def tracking_metrics(record: "TrajectoryRecord", final_fraction: float = 0.25) -> Dict[str, Any]:
    """Ошибки и усилие управления: весь прогон и последняя доля горизонта."""
    count = len(record.t)
    start = min(int(math.floor(count * (1.0 - final_fraction))), count - 1)
    err = np.linalg.norm(record.e, axis=1)
    effort = np.linalg.norm(record.u, axis=1)
    final_err = err[start:]
    return {
        "final_fraction": final_fraction,
        "final_error": float(err[-1]),
        "final_window_rms": float(np.sqrt(np.mean(final_err ** 2))),
        "final_window_max": float(np.max(final_err)),
        "final_window_min": float(np.min(final_err)),
        "sup_u": float(np.max(effort)),
        "final_window_sup_u": float(np.max(effort[start:])),
        "min_P": float(np.min(record.P)),
        "sup_norms": signal_sups(record),
    }


def signal_sups(record: "TrajectoryRecord") -> Dict[str, float]:
    sups = {}
    for label in ("x", "u", "theta_hat", "mu", "r"):
        sups[label] = float(np.max(np.linalg.norm(getattr(record, label), axis=1)))
    sups["P"] = float(np.max(np.abs(record.P)))
    return sups


def verification_report(
    record: "TrajectoryRecord",
    scenario: "Scenario",
    seed: Optional[int] = None,
    bounds: Optional[BoundReport] = None,
) -> Dict[str, Any]:
    """
    Полный набор проверок для одного прогона.

    checks[name] = {"passed": ..., "value": ..., "threshold": ...}. Сертификаты
    (условие на β, P ≥ 0, шар проекции, скорость θ̂, λ₃ > 0, монотонность V_L)
    имеют смысл только для RISE; для базовых регуляторов остаются метрики.
    """
    report: Dict[str, Any] = {"controller": record.kind.value, "tracking": tracking_metrics(record)}
    if record.kind is not ControllerKind.RISE:
        report["checks"] = {}
        report["certified"] = True
        report["run_certified"] = True
        return report

    gains = scenario.gains
    if bounds is None:
        bounds = bound_report(scenario)
    met, margin = check_gain_condition(gains, bounds)
    lyap = lyapunov_report(record, gains)
    proj = projection_report(record, gains.theta_bar)
    cor1 = corollary1_check(record, gains, bounds.Yd_bar)
    residual = identity_residual(record, scenario.model, scenario.reference)

    checks = {
        "gain_condition": {"passed": met, "value": gains.beta, "threshold": bounds.beta_required},
        "P_nonnegative": {"passed": lyap["min_P"] >= -P_TOL, "value": lyap["min_P"], "threshold": -P_TOL},
        "projection_ball": {"passed": proj["in_ball"], "value": proj["sup_theta_hat"], "threshold": gains.theta_bar + BALL_TOL},
        "projection_tangency": {"passed": proj["tangent"], "value": proj["max_outward_rate"], "threshold": TANGENCY_TOL},
        "corollary1": {"passed": cor1["passed"], "value": cor1["measured"], "threshold": cor1["gamma3"] * (1.0 + COROLLARY1_SLACK)},
        "lambda3_positive": {"passed": lyap["lambda3_positive"], "value": lyap["lambda3"], "threshold": 0.0},
        "V_L_monotone": {"passed": lyap["monotone"], "value": lyap["max_step_increase"], "threshold": V_L_STEP_TOL},
        "r_identity": {"passed": residual <= IDENTITY_TOL, "value": residual, "threshold": IDENTITY_TOL},
    }
    if seed is not None:
        lemma = lemma1_randomized(seed)
        checks["lemma1_randomized"] = {"passed": lemma["passed"], "value": lemma["worst_ratio"], "threshold": 1.0}

    report.update({
        "bounds": bounds.as_dict(),
        "gain_margin": margin,
        "lyapunov": lyap,
        "projection": proj,
        "corollary1": cor1,
        "checks": checks,
        "certified": all(item["passed"] for item in checks.values()),
        "run_certified": all(checks[name]["passed"] for name in RUN_CERTIFICATES),
    })

    for name, item in checks.items():
        if not item["passed"]:
            logger.warning("certificate %s failed on %s: value=%.6g threshold=%.6g",
                           name, scenario.name, item["value"], item["threshold"])
    return report
