"""Experiment configuration, orchestration and result export."""

from .config import ExperimentConfig, load_config, load_preset
from .runner import run_experiment, run_sweep

__all__ = ["ExperimentConfig", "load_config", "load_preset", "run_experiment", "run_sweep"]
