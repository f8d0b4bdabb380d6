"""Stream generation, baselines, metrics and the experiment runner."""

from gdgr.bench.metrics import MetricsReport, Record, compute_metrics, confusion_matrix, macro_scores
from gdgr.bench.runner import (
    Experiment,
    emit_outputs,
    run_aura,
    run_draco_baseline,
    run_experiment,
    run_graql_baseline,
)
from gdgr.bench.speedup import SpeedupRun, compare_adaptation, median_iterations, plateau_threshold
from gdgr.bench.stream import ExperimentConfig, ExpertPool, GDGRStream, GRProblem, generate_stream

__all__ = [
    "Experiment",
    "ExperimentConfig",
    "ExpertPool",
    "GDGRStream",
    "GRProblem",
    "MetricsReport",
    "Record",
    "SpeedupRun",
    "compare_adaptation",
    "compute_metrics",
    "confusion_matrix",
    "emit_outputs",
    "generate_stream",
    "macro_scores",
    "median_iterations",
    "plateau_threshold",
    "run_aura",
    "run_draco_baseline",
    "run_experiment",
    "run_graql_baseline",
]
