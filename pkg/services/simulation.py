"""
Интегрирование замкнутой системы (x, θ̂, μ, P) классическим RK4 с постоянным шагом.

sgn(e) и ветка проекции вычисляются один раз в начале шага и не меняются
на стадиях: так выбирается одно детерминированное решение разрывной системы.
"""

import logging
import math
import time
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from config import DIVERGENCE_LIMIT
from plant.model import InputDomainError, eval_theta, eval_theta_dot
from plant.regressor import eval_Y, eval_Yd, eval_Yd_dot
from plant.scenarios import Scenario
from services.baselines import GradientLaw, RobustLaw, SigmaModLaw
from services.controller import (
    Branch,
    ControlLaw,
    ControllerKind,
    ControllerState,
    FrozenSwitch,
    RiseLaw,
    StageRates,
    TimeSignals,
)

logger = logging.getLogger(__name__)

# Ẏ_d во времени — центральная разность с шагом dt / FD_DIVISOR
FD_DIVISOR = 100.0


class SimulationError(Exception):
    pass


class SimulationConfigError(SimulationError):
    pass


class SimulationDivergedError(SimulationError):
    def __init__(self, message: str, step_index: int, last_state: "SimState"):
        self.step_index = step_index
        self.last_state = last_state
        super().__init__(message)


@dataclass
class SimState:
    t: float
    x: np.ndarray
    controller: ControllerState
    P: float

    @property
    def theta_hat(self) -> np.ndarray:
        return self.controller.theta_hat

    @property
    def mu(self) -> np.ndarray:
        return self.controller.mu


@dataclass(frozen=True, eq=False)
class TrajectoryRecord:
    """
    Запись прогона: по строке на каждый шаг, первая строка — t = 0.

    theta_hat_dot — правая часть закона адаптации в начале шага,
    n_tilde — Ñ = (Ẏ−Ẏ_d)θ + (Y−Y_d)θ̇ + e (Ẏ разностью по отсчётам записи).
    """

    kind: ControllerKind
    scenario: str
    n: int
    m: int
    dt: float
    t: np.ndarray
    x: np.ndarray
    xd: np.ndarray
    e: np.ndarray
    r: np.ndarray
    u: np.ndarray
    theta: np.ndarray
    theta_hat: np.ndarray
    theta_tilde: np.ndarray
    mu: np.ndarray
    P: np.ndarray
    V_L: np.ndarray
    boundary: np.ndarray
    switching: np.ndarray
    theta_hat_dot: np.ndarray
    n_tilde: np.ndarray
    renormalizations: int = 0

    SIGNALS = (
        "t", "x", "xd", "e", "r", "u", "theta", "theta_hat", "theta_tilde",
        "mu", "P", "V_L", "boundary", "switching", "theta_hat_dot", "n_tilde",
    )

    def __post_init__(self) -> None:
        for label in self.SIGNALS:
            getattr(self, label).setflags(write=False)

    def __len__(self) -> int:
        return len(self.t)

    @property
    def switch_count(self) -> int:
        return int(np.count_nonzero(self.switching))


def build_law(scenario: Scenario, kind: Optional[ControllerKind] = None) -> ControlLaw:
    kind = ControllerKind(kind or scenario.controller_kind)
    if kind is ControllerKind.RISE:
        return RiseLaw(scenario.model, scenario.reference, scenario.gains)
    laws = {
        ControllerKind.SIGMA_MOD: SigmaModLaw,
        ControllerKind.GRADIENT: GradientLaw,
        ControllerKind.ROBUST: RobustLaw,
    }
    return laws[kind](scenario.model, scenario.reference, scenario.gains, scenario.baseline)


def regressor_rate(Y: np.ndarray, dt: float) -> np.ndarray:
    """Ẏ вдоль записанной траектории: np.gradient по оси времени."""
    if len(Y) < 2:
        return np.zeros_like(Y)
    return np.gradient(Y, dt, axis=0, edge_order=2 if len(Y) >= 3 else 1)


class Integrator:
    """Один прогон одного регулятора; состояние принадлежит только ему."""

    SIGNAL_CACHE_SIZE = 4

    def __init__(
        self,
        scenario: Scenario,
        kind: Optional[ControllerKind] = None,
        divergence_limit: float = DIVERGENCE_LIMIT,
    ):
        if not (math.isfinite(scenario.dt) and scenario.dt > 0):
            raise SimulationConfigError(f"dt must be positive, got {scenario.dt!r}")
        if not scenario.t_end >= 0:
            raise SimulationConfigError(f"t_end must be nonnegative, got {scenario.t_end!r}")
        self.scenario = scenario
        self.law = build_law(scenario, kind)
        self.kind = self.law.kind
        self.h = scenario.dt / FD_DIVISOR
        self.divergence_limit = divergence_limit
        self.renormalizations = 0
        self._signals: Dict[float, TimeSignals] = {}

    # ================== СИГНАЛЫ ВРЕМЕНИ ==================

    def signals(self, t: float) -> TimeSignals:
        cached = self._signals.get(t)
        if cached is not None:
            return cached
        sc = self.scenario
        Yd = eval_Yd(sc.model, sc.reference, t)
        Yd_dot = eval_Yd_dot(sc.model, sc.reference, t, self.h)
        theta = eval_theta(sc.model, t)
        theta_dot = eval_theta_dot(sc.model, t)
        cached = TimeSignals(
            xd=np.asarray(sc.reference.xd(t), dtype=float),
            xd_dot=np.asarray(sc.reference.xd_dot(t), dtype=float),
            Yd=Yd,
            Yd_dot=Yd_dot,
            theta=theta,
            theta_dot=theta_dot,
            nb_known=Yd @ theta_dot + Yd_dot @ theta,
        )
        if len(self._signals) >= self.SIGNAL_CACHE_SIZE:
            self._signals.pop(next(iter(self._signals)))
        self._signals[t] = cached
        return cached

    def initial_state(self) -> SimState:
        sc = self.scenario
        x0 = np.array(sc.x0, dtype=float)
        theta_hat0 = np.array(sc.theta_hat0, dtype=float)
        P0 = self.law.initial_P(x0, theta_hat0, self.signals(0.0))
        controller = ControllerState(theta_hat=theta_hat0, mu=np.zeros(sc.n))
        return SimState(t=0.0, x=x0, controller=controller, P=P0)

    def _rates(self, t: float, x, theta_hat, mu, frozen: FrozenSwitch) -> StageRates:
        return self.law.rates(t, x, theta_hat, mu, frozen, self.signals(t))

    def freeze(self, state: SimState) -> FrozenSwitch:
        return self.law.freeze(state.t, state.x, state.theta_hat, self.signals(state.t))

    # ================== ШАГ ==================

    def step(
        self,
        state: SimState,
        k: Optional[int] = None,
        frozen: Optional[FrozenSwitch] = None,
        first: Optional[StageRates] = None,
    ) -> SimState:
        """
        Один шаг RK4. Если передан индекс шага k, моменты стадий считаются как
        k·dt, (k+½)·dt, (k+1)·dt, чтобы кэш сигналов попадал точно.
        """
        dt = self.scenario.dt
        if k is None:
            t0 = state.t
            tm = t0 + 0.5 * dt
            t1 = t0 + dt
        else:
            t0 = k * dt
            tm = (k + 0.5) * dt
            t1 = (k + 1) * dt

        x, th, mu, P = state.x, state.theta_hat, state.mu, state.P
        if frozen is None:
            frozen = self.law.freeze(t0, x, th, self.signals(t0))
        k1 = first if first is not None else self._rates(t0, x, th, mu, frozen)

        half = 0.5 * dt
        k2 = self._rates(tm, x + half * k1.x_dot, th + half * k1.theta_hat_dot, mu + half * k1.mu_dot, frozen)
        k3 = self._rates(tm, x + half * k2.x_dot, th + half * k2.theta_hat_dot, mu + half * k2.mu_dot, frozen)
        k4 = self._rates(t1, x + dt * k3.x_dot, th + dt * k3.theta_hat_dot, mu + dt * k3.mu_dot, frozen)

        sixth = dt / 6.0
        x1 = x + sixth * (k1.x_dot + 2.0 * k2.x_dot + 2.0 * k3.x_dot + k4.x_dot)
        th1 = th + sixth * (k1.theta_hat_dot + 2.0 * k2.theta_hat_dot + 2.0 * k3.theta_hat_dot + k4.theta_hat_dot)
        mu1 = mu + sixth * (k1.mu_dot + 2.0 * k2.mu_dot + 2.0 * k3.mu_dot + k4.mu_dot)
        P1 = P + sixth * (k1.P_dot + 2.0 * k2.P_dot + 2.0 * k3.P_dot + k4.P_dot)

        if self.kind is ControllerKind.RISE:
            th1, mu1 = self._reproject(t1, th1, mu1)

        next_state = SimState(
            t=t1,
            x=x1,
            controller=ControllerState(theta_hat=th1, mu=mu1, last_branch=frozen.branch),
            P=float(P1),
        )
        self._check_finite(next_state, state, k)
        return next_state

    def _reproject(self, t1: float, theta_hat: np.ndarray, mu: np.ndarray):
        """
        Вернуть θ̂ на шар, если шаг вынес его наружу. μ получает ту же поправку
        Y_d·Δθ̂, что и μ₁, поэтому r не меняется.
        """
        theta_bar = self.scenario.gains.theta_bar
        norm = float(np.linalg.norm(theta_hat))
        if norm <= theta_bar:
            return theta_hat, mu
        projected = theta_hat * (theta_bar / norm)
        mu = mu + self.signals(t1).Yd @ (projected - theta_hat)
        self.renormalizations += 1
        logger.debug("t=%.6g: theta_hat renormalised from %.12g to %.12g", t1, norm, theta_bar)
        return projected, mu

    def _check_finite(self, state: SimState, last: SimState, k: Optional[int]) -> None:
        index = (k + 1) if k is not None else int(round(state.t / self.scenario.dt))
        limit = self.divergence_limit
        for label, value in (("x", state.x), ("theta_hat", state.theta_hat), ("mu", state.mu)):
            norm = float(np.linalg.norm(value))
            if not math.isfinite(norm) or norm > limit:
                raise SimulationDivergedError(
                    f"diverged at step {index} (t={state.t:.6g}): ||{label}|| = {norm:.3g}", index, last
                )
        if not math.isfinite(state.P) or abs(state.P) > limit:
            raise SimulationDivergedError(f"diverged at step {index} (t={state.t:.6g}): P = {state.P:.3g}", index, last)

    # ================== ПРОГОН ==================

    def run(self) -> TrajectoryRecord:
        sc = self.scenario
        count = sc.steps + 1
        n, p = sc.n, sc.model.p

        t = np.zeros(count)
        arrays = {label: np.zeros((count, n)) for label in ("x", "xd", "e", "r", "u", "mu")}
        arrays.update({label: np.zeros((count, p)) for label in ("theta", "theta_hat", "theta_tilde", "theta_hat_dot")})
        P = np.zeros(count)
        V_L = np.zeros(count)
        boundary = np.zeros(count, dtype=bool)
        switching = np.zeros(count, dtype=bool)
        # Для Ñ после прогона
        Y = np.zeros((count, n, p))
        Yd = np.zeros((count, n, p))
        Yd_dot = np.zeros((count, n, p))
        theta_dot = np.zeros((count, p))

        def record(k: int, state: SimState, frozen: FrozenSwitch, rates: StageRates) -> None:
            s = self.signals(state.t)
            e = state.x - s.xd
            t[k] = state.t
            arrays["x"][k] = state.x
            arrays["xd"][k] = s.xd
            arrays["e"][k] = e
            arrays["r"][k] = rates.r
            arrays["u"][k] = rates.u
            arrays["mu"][k] = state.mu
            arrays["theta"][k] = s.theta
            arrays["theta_hat"][k] = state.theta_hat
            arrays["theta_tilde"][k] = s.theta - state.theta_hat
            arrays["theta_hat_dot"][k] = rates.theta_hat_dot
            Y[k] = eval_Y(sc.model, state.x, state.t)
            Yd[k] = s.Yd
            Yd_dot[k] = s.Yd_dot
            theta_dot[k] = s.theta_dot
            P[k] = state.P
            V_L[k] = 0.5 * float(rates.r @ rates.r) + 0.5 * float(e @ e) + state.P
            boundary[k] = frozen.branch is Branch.BOUNDARY
            switching[k] = k > 0 and boundary[k] != boundary[k - 1]

        started = time.perf_counter()
        logger.info("run %s/%s: %d steps, dt=%g", sc.name, self.kind.value, count - 1, sc.dt)

        state = self.initial_state()
        frozen = self.freeze(state)
        first = self._rates(state.t, state.x, state.theta_hat, state.mu, frozen)
        record(0, state, frozen, first)

        with np.errstate(over="ignore", invalid="ignore"):
            for k in range(count - 1):
                try:
                    state = self.step(state, k, frozen, first)
                    frozen = self.freeze(state)
                    first = self._rates(state.t, state.x, state.theta_hat, state.mu, frozen)
                except InputDomainError as exc:
                    raise SimulationDivergedError(f"diverged at step {k + 1}: {exc}", k + 1, state) from exc
                record(k + 1, state, frozen, first)

        # Ñ = (Ẏ−Ẏ_d)θ + (Y−Y_d)θ̇ + e, одним проходом по всей записи
        Y_dot = regressor_rate(Y, sc.dt)
        arrays["n_tilde"] = (
            np.einsum("kij,kj->ki", Y_dot - Yd_dot, arrays["theta"])
            + np.einsum("kij,kj->ki", Y - Yd, theta_dot)
            + arrays["e"]
        )

        elapsed = time.perf_counter() - started
        logger.info(
            "run %s/%s finished in %.2fs: final ||e|| = %.3g, switches = %d",
            sc.name, self.kind.value, elapsed, float(np.linalg.norm(arrays["e"][-1])),
            int(np.count_nonzero(switching)),
        )
        if self.renormalizations:
            logger.warning(
                "run %s/%s: theta_hat was renormalised onto the ball %d times",
                sc.name, self.kind.value, self.renormalizations,
            )

        return TrajectoryRecord(
            kind=self.kind,
            scenario=sc.name,
            n=n,
            m=sc.m,
            dt=sc.dt,
            t=t,
            P=P,
            V_L=V_L,
            boundary=boundary,
            switching=switching,
            renormalizations=self.renormalizations,
            **arrays,
        )


def step(state: SimState, scenario: Scenario) -> SimState:
    """Один шаг от state.t; для цепочки шагов выгоднее держать Integrator."""
    return Integrator(scenario).step(state)


def run(scenario: Scenario, kind: Optional[ControllerKind] = None) -> TrajectoryRecord:
    return Integrator(scenario, kind).run()
