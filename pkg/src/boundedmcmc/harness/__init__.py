"""Experiment configuration, orchestration and the command-line interface."""

from .config import ConfigError, ExperimentConfig, Variant, load_config, parse_config
from .experiments import build_target, compare_runs, run_experiment, run_sweep

__all__ = ["ConfigError", "ExperimentConfig", "Variant", "load_config", "parse_config",
           "build_target", "compare_runs", "run_experiment", "run_sweep"]
