"""Scenario runner, metrics and artifacts."""

from .artifacts import Audit, audit_run, write_run
from .config import ConfigError, ScenarioConfig, load_scenario, validate_scenario
from .metrics import Metrics, artifact_digest, compute_metrics
from .runner import RunResult, run_execute_order_validate, run_order_execute_mode, run_scenario

__all__ = [
    "Audit",
    "ConfigError",
    "Metrics",
    "RunResult",
    "ScenarioConfig",
    "artifact_digest",
    "audit_run",
    "compute_metrics",
    "load_scenario",
    "run_execute_order_validate",
    "run_order_execute_mode",
    "run_scenario",
    "validate_scenario",
    "write_run",
]
