"""Scenario runner and CLI reproducing the pi-pulse, state, gate and frontier studies."""

from .config import SCENARIOS, ConfigError, ExperimentConfig, default_config, default_config_path, load_config
from .scenarios import (
    NumericalFailure,
    RunManifest,
    ScenarioResult,
    run,
    run_frontier,
    run_opt_gate,
    run_opt_state,
    run_pi_scan,
)

__all__ = [
    "SCENARIOS",
    "ConfigError",
    "ExperimentConfig",
    "NumericalFailure",
    "RunManifest",
    "ScenarioResult",
    "default_config",
    "default_config_path",
    "load_config",
    "run",
    "run_frontier",
    "run_opt_gate",
    "run_opt_state",
    "run_pi_scan",
]
