"""Monte Carlo harness: configuration, experiments, result tables and CLI."""

from .config import ExperimentConfig, load_config, parse_config
from .experiments import (
    beta_trace_experiment,
    check_rows,
    dof_experiment,
    nmse_experiment,
    run_experiment,
    shape_nmse_experiment,
    validation_suite,
)
from .results import ExperimentResult, ResultRow

__all__ = [
    "ExperimentConfig",
    "ExperimentResult",
    "ResultRow",
    "beta_trace_experiment",
    "check_rows",
    "dof_experiment",
    "load_config",
    "nmse_experiment",
    "parse_config",
    "run_experiment",
    "shape_nmse_experiment",
    "validation_suite",
]
