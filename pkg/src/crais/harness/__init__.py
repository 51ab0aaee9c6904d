"""Experiment configs, runners and the command-line entry point."""

from .config import ConfigError, ExperimentConfig, config_hash, load_config
from .runner import cli_benchmark, cli_run, cli_tune_then_test, run_single

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "config_hash",
    "load_config",
    "cli_benchmark",
    "cli_run",
    "cli_tune_then_test",
    "run_single",
]
