# plant/__init__.py
from .model import (
    BoundsViolationError,
    InputDomainError,
    ParameterBounds,
    PlantError,
    ReferenceTrajectory,
    SystemModel,
    as_state,
    check_parameter_bounds,
    check_reference,
    eval_theta,
    eval_theta_ddot,
    eval_theta_dot,
)

from .regressor import (
    AugmentedRegressor,
    estimate_Yd_bar,
    eval_Y,
    eval_Yd,
    eval_Yd_ddot,
    eval_Yd_dot,
    has_augmented_structure,
)

__all__ = [
    "BoundsViolationError",
    "InputDomainError",
    "ParameterBounds",
    "PlantError",
    "ReferenceTrajectory",
    "SystemModel",
    "as_state",
    "check_parameter_bounds",
    "check_reference",
    "eval_theta",
    "eval_theta_ddot",
    "eval_theta_dot",
    "AugmentedRegressor",
    "estimate_Yd_bar",
    "eval_Y",
    "eval_Yd",
    "eval_Yd_ddot",
    "eval_Yd_dot",
    "has_augmented_structure",
]
