"""Robust and adaptive control charts with Monte Carlo run-length analysis."""

from .datagen import CLEAN, CONTAMINATED, RandomStream, Scenario
from .arl import calibrate_limit, estimate_arl, simulate_run_lengths
from .report import ComparisonTable, rarl_table
from . import charts, stats

__all__ = [
    "CLEAN",
    "CONTAMINATED",
    "RandomStream",
    "Scenario",
    "calibrate_limit",
    "estimate_arl",
    "simulate_run_lengths",
    "ComparisonTable",
    "rarl_table",
    "charts",
    "stats",
]
__version__ = "0.1.0"
