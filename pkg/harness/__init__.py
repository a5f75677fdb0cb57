"""nfvpower experiment harness."""

from harness.experiment import ExperimentConfig, ResultRow, load_experiment_config, run_experiment
from harness.report import read_csv, summarize, write_csv

__all__ = [
    "ExperimentConfig",
    "ResultRow",
    "load_experiment_config",
    "read_csv",
    "run_experiment",
    "summarize",
    "write_csv",
]
