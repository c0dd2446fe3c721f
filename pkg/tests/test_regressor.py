import math

import numpy as np
import pytest

from plant.model import InputDomainError, eval_theta
from plant.regressor import (
    estimate_Yd_bar,
    eval_Y,
    eval_Yd,
    eval_Yd_ddot,
    eval_Yd_dot,
    has_augmented_structure,
)
from plant.scenarios import builtin_scenario


@pytest.fixture(scope="module")
def s1():
    return builtin_scenario("S1_scalar")


def test_s1_augmented_regressor(s1):
    assert eval_Y(s1.model, np.array([2.0]), 0.0).tolist() == [[2.0, 1.0]]


def test_s2_augmented_regressor():
    model = builtin_scenario("S2_twostate").model
    Y = eval_Y(model, np.array([1.0, 1.0]), 0.0)
    expected = [[1.0, 1.0, 0.0, 1.0, 0.0], [0.0, 1.0, math.sin(1.0), 0.0, 1.0]]
    assert Y == pytest.approx(np.array(expected), abs=0.0)


def test_zero_yh_isolates_disturbance():
    model = builtin_scenario("S4_disturbance_only").model
    for t in (0.0, 0.7, 3.1):
        Y = eval_Y(model, np.array([5.0]), t)
        assert Y @ eval_theta(model, t) == pytest.approx(model.d(t), abs=0.0)


def test_desired_regressor_at_zero(s1):
    assert eval_Yd(s1.model, s1.reference, 0.0).tolist() == [[0.0, 1.0]]


@pytest.mark.parametrize("t", [0.0, 1e-6, 1.0, 2.5])
def test_yd_dot_matches_analytic(s1, t):
    # Y_d = [sin t, 1] → Ẏ_d = [cos t, 0]
    Yd_dot = eval_Yd_dot(s1.model, s1.reference, t, 1e-4)
    assert Yd_dot == pytest.approx(np.array([[math.cos(t), 0.0]]), abs=1e-6)


def test_yd_ddot_matches_analytic(s1):
    Yd_ddot = eval_Yd_ddot(s1.model, s1.reference, 1.0, 1e-3)
    assert Yd_ddot == pytest.approx(np.array([[-math.sin(1.0), 0.0]]), abs=1e-5)


def test_nonfinite_state_rejected(s1):
    with pytest.raises(InputDomainError):
        eval_Y(s1.model, np.array([float("nan")]), 0.0)


def test_augmented_structure_check(s1):
    Y = eval_Y(s1.model, np.array([0.3]), 1.0)
    assert has_augmented_structure(Y, 1, 1)
    broken = Y.copy()
    broken[0, 1] = 0.5
    assert not has_augmented_structure(broken, 1, 1)
    assert not has_augmented_structure(Y, 2, 1)


def test_yd_bar_for_s1(s1):
    # ‖[sin t, 1]‖ ≤ √2, равенство при sin t = ±1
    yd_bar = estimate_Yd_bar(s1.model, s1.reference, 2 * math.pi, 1e-3)
    assert yd_bar == pytest.approx(math.sqrt(2.0), rel=1e-5)
    assert yd_bar >= math.sqrt(2.0)
