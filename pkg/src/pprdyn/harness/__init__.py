"""Experiment harness: datasets, noise, snapshot replay and reporting."""
from .datasets import Dataset, Splits, convert_linqs, load_dataset, make_synthetic, save_dataset
from .experiment import (METHODS, ExperimentPlan, RunReport, calibrate_eps_scale, compare_solvers,
                         run_experiment, verify_report)
from .noise import NoiseConfig, apply_noise

__all__ = [
    "Dataset", "ExperimentPlan", "METHODS", "NoiseConfig", "RunReport", "Splits",
    "apply_noise", "calibrate_eps_scale", "compare_solvers", "convert_linqs", "load_dataset",
    "make_synthetic", "run_experiment", "save_dataset", "verify_report",
]
