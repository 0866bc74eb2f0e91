"""Bundled datasets."""

from __future__ import annotations

from importlib import resources

from .stats import TrialMatrix

# Column groups of the bundled team-performance table: the four conditions
# without an approval step and the four with one.
NO_APPROVAL_TASKS = ("task_a", "task_d", "task_f", "task_h")
APPROVAL_TASKS = ("task_b", "task_c", "task_e", "task_g")


def team_performance_table() -> TrialMatrix:
    """Normalized team performance of 16 operator teams under 8 allocation
    conditions (row-normalized so every team's row mean is 1)."""
    text = resources.files("crewload.data").joinpath("team_performance.csv").read_text()
    return TrialMatrix.from_csv(text)
