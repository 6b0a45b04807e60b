"""Python bindings for the mrt forecaster.

Configs and schemas are plain dicts in the same JSON layout the CLI reads.
"""

from ._core import (
    ConfigError,
    DimensionError,
    Error,
    Model,
    SchemaError,
    default_config,
    default_model_config,
    grad_check,
    head_param_count,
    patch_plan,
    run,
    synthesize,
    synthetic_schema,
    toy_config,
    toy_schema,
)

__all__ = [
    "ConfigError",
    "DimensionError",
    "Error",
    "Model",
    "SchemaError",
    "default_config",
    "default_model_config",
    "grad_check",
    "head_param_count",
    "patch_plan",
    "run",
    "synthesize",
    "synthetic_schema",
    "toy_config",
    "toy_schema",
]
