import numpy as np
import pytest

from plant.model import ReferenceTrajectory
from plant.scenarios import builtin_scenario, with_updates
from services.controller import ControllerKind
from services.simulation import run

# Шаг для проверок порога слежения: амплитуда дребезга sgn(e) пропорциональна β·dt
FINE_DT = 2.5e-4


@pytest.fixture(scope="session")
def s1_short():
    return builtin_scenario("S1_scalar", t_end=2.0)


@pytest.fixture(scope="session")
def s1_short_record(s1_short):
    return run(s1_short)


@pytest.fixture(scope="session")
def s4_short():
    return builtin_scenario("S4_disturbance_only", t_end=5.0)


@pytest.fixture(scope="session")
def s4_short_record(s4_short):
    return run(s4_short)


@pytest.fixture(scope="session")
def s1_full_runs():
    """40-секундные прогоны S1 по всем регуляторам; считаются один раз на сессию."""
    scenario = builtin_scenario("S1_scalar")
    return scenario, {kind: run(scenario, kind) for kind in ControllerKind}


@pytest.fixture(scope="session")
def s1_fine_record():
    return run(builtin_scenario("S1_scalar", dt=FINE_DT))


@pytest.fixture(scope="session")
def s2_fine_record():
    return run(builtin_scenario("S2_twostate", dt=FINE_DT))


def _constant(value):
    return lambda t: np.array([value])


@pytest.fixture
def oracle_s3():
    """S3 с постоянной x_d, θ̂(0) = θ и x(0) = x_d: точка равновесия системы ошибок."""
    scenario = builtin_scenario("S3_constant_param", t_end=0.1)
    reference = ReferenceTrajectory(
        xd=_constant(0.5),
        xd_dot=_constant(0.0),
        xd_ddot=_constant(0.0),
        xd_bar=0.5,
        delta1=1.0,
        delta2=1.0,
    )
    return with_updates(
        scenario,
        reference=reference,
        x0=np.array([0.5]),
        theta_hat0=np.array([1.0, 0.0]),
    )
