"""TOML run configuration with environment and command-line overrides."""
from .settings import (
    DEFAULT_CONFIG,
    EvalConfig,
    RunConfig,
    RunSettings,
    SampleConfig,
    build_config,
    load_config,
    parse_override,
)

__all__ = [
    "DEFAULT_CONFIG",
    "EvalConfig",
    "RunConfig",
    "RunSettings",
    "SampleConfig",
    "build_config",
    "load_config",
    "parse_override",
]
