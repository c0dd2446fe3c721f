import math

import numpy as np
import pytest

from plant.model import (
    BoundsViolationError,
    InputDomainError,
    ParameterBounds,
    PlantError,
    as_state,
    check_parameter_bounds,
    check_reference,
    eval_theta,
    eval_theta_dot,
)
from plant.scenarios import builtin_scenario


def test_eval_theta_s1_at_zero():
    model = builtin_scenario("S1_scalar").model
    assert eval_theta(model, 0.0).tolist() == [1.0, 0.0]


def test_eval_theta_s4_has_zero_parametric_part():
    model = builtin_scenario("S4_disturbance_only").model
    for t in np.linspace(0.0, 10.0, 37):
        assert eval_theta(model, float(t))[: model.m].tolist() == [0.0]


def test_eval_theta_s2_quarter_period():
    model = builtin_scenario("S2_twostate").model
    theta = eval_theta(model, math.pi / 2)
    assert theta == pytest.approx([1.3, -0.7, 0.8, -0.1, 0.0], abs=1e-12)


def test_s3_parameter_is_constant():
    model = builtin_scenario("S3_constant_param").model
    for t in (0.0, 1.0, 17.3):
        assert np.all(eval_theta_dot(model, t) == 0.0)


@pytest.mark.parametrize("bad", [[1.0, 2.0], [float("nan")], [float("inf")]])
def test_as_state_rejects_bad_input(bad):
    with pytest.raises(InputDomainError):
        as_state(bad, 1)


def test_as_state_promotes_scalar():
    assert as_state(2.5, 1).tolist() == [2.5]


@pytest.mark.parametrize("field", ["theta_bar", "zeta1", "zeta2"])
def test_parameter_bounds_must_be_positive(field):
    values = {"theta_bar": 1.0, "zeta1": 1.0, "zeta2": 1.0}
    values[field] = 0.0
    with pytest.raises(PlantError):
        ParameterBounds(**values)


def test_builtin_bounds_hold_on_horizon():
    scenario = builtin_scenario("S1_scalar")
    report = check_parameter_bounds(scenario.model, scenario.bounds, scenario.t_end)
    assert report["sup_theta"] <= scenario.bounds.theta_bar
    assert report["sup_fd_rate"] <= scenario.bounds.zeta1 * 1.001


def test_violated_theta_bound_is_reported():
    scenario = builtin_scenario("S1_scalar")
    tight = ParameterBounds(theta_bar=1.0, zeta1=scenario.bounds.zeta1, zeta2=scenario.bounds.zeta2)
    with pytest.raises(BoundsViolationError, match="theta_bar"):
        check_parameter_bounds(scenario.model, tight, 10.0)


def test_reference_derivative_is_consistent():
    reference = builtin_scenario("S2_twostate").reference
    report = check_reference(reference, 2 * math.pi, samples=500)
    assert report["fd_error"] < 1e-6
    assert report["sup_xd"] <= 1.0
