"""Experiment runner and command line interface."""

from epdp.bench.config import ExperimentConfig, assign_requirements, load_config, parse_config_text
from epdp.bench.runner import emit_summary, run_experiment

__all__ = ["ExperimentConfig", "assign_requirements", "emit_summary", "load_config", "parse_config_text", "run_experiment"]
