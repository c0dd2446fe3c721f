# __init__.py
from .settings import (
    ALLOWED_OVERRIDE_KEYS,
    CONTROLLER_KINDS,
    DEFAULT_SEED,
    OverrideError,
    RunConfig,
    RunConfigError,
    parse_controllers,
)

from .overrides import (
    apply_overrides,
    parse_override,
    parse_overrides,
    resolve_scenario,
)

__all__ = [
    "ALLOWED_OVERRIDE_KEYS",
    "CONTROLLER_KINDS",
    "DEFAULT_SEED",
    "OverrideError",
    "RunConfig",
    "RunConfigError",
    "parse_controllers",
    "apply_overrides",
    "parse_override",
    "parse_overrides",
    "resolve_scenario",
]
