"""Experiment harness: data ingestion, orchestration, bound verification and CLI."""

from .data import Dataset, load_csv, split, split_indices, standardize, synthetic_regression
from .experiment import ExperimentConfig, MetricsRecord, Method, run_experiment
from .verify import VerifyConfig, verify_bounds_cmd

__all__ = [
    "Dataset",
    "ExperimentConfig",
    "Method",
    "MetricsRecord",
    "VerifyConfig",
    "load_csv",
    "run_experiment",
    "split",
    "split_indices",
    "standardize",
    "synthetic_regression",
    "verify_bounds_cmd",
]
