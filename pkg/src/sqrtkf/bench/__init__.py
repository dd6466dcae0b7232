"""Precision stress experiments comparing the square-root and conventional filters."""

from .compare import SchemaMismatch, compare_traces
from .config import ConfigInvalid, ExperimentConfig
from .experiment import run_experiment

__all__ = ["ConfigInvalid", "ExperimentConfig", "SchemaMismatch", "compare_traces", "run_experiment"]
