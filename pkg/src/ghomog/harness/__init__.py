"""Experiment harness: configuration, seed-parallel runs, CSV records and reports."""
from .config import EXPERIMENT_NAMES, ConfigError, ExperimentConfig, load_config, parse_config
from .experiments import EXPERIMENTS, BudgetExceeded
from .report import ReportError, report
from .runner import ExperimentRecord, RunResult, read_records, run

__all__ = [
    "EXPERIMENT_NAMES",
    "EXPERIMENTS",
    "BudgetExceeded",
    "ConfigError",
    "ExperimentConfig",
    "ExperimentRecord",
    "ReportError",
    "RunResult",
    "load_config",
    "parse_config",
    "read_records",
    "report",
    "run",
]
