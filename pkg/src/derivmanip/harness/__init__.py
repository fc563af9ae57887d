"""Experiment engine: training loop, metrics, label correction, sweeps, CLI."""

from .config import RunConfig, WeightScheme, CorruptionSpec, load_config, parse_scheme
from .training import (
    eval_subsets,
    export_edf_curve,
    label_correct_and_retrain,
    run_training,
    sweep,
    track_pi_dynamics,
)
from .cli import cli_main

__all__ = [
    "RunConfig",
    "WeightScheme",
    "CorruptionSpec",
    "load_config",
    "parse_scheme",
    "run_training",
    "eval_subsets",
    "track_pi_dynamics",
    "label_correct_and_retrain",
    "sweep",
    "export_edf_curve",
    "cli_main",
]
