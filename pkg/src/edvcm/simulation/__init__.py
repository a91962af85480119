"""Simulation harness: truth surfaces, synthetic data, comparator fits and metrics."""

from .datagen import LayoutSpec, remove_durations, simulate_dataset, unit_probabilities
from .fitters import (
    METHODS,
    CoefficientEstimates,
    coefficient_names,
    fit_edvcm,
    fit_frequentist_glm,
    fit_independent_normal,
)
from .metrics import SimulationReport, compute_metrics
from .study import (
    PROTOCOL_PRESETS,
    StudyProtocol,
    StudyResult,
    paper_main_protocol,
    resolve_protocol,
    run_replicate,
    run_study,
)
from .surface import SurfaceSpec, farthest_point_knots, generate_lag_surface, generate_true_surface, tps_kernel

__all__ = [
    "METHODS",
    "PROTOCOL_PRESETS",
    "CoefficientEstimates",
    "LayoutSpec",
    "SimulationReport",
    "StudyProtocol",
    "StudyResult",
    "SurfaceSpec",
    "coefficient_names",
    "compute_metrics",
    "farthest_point_knots",
    "fit_edvcm",
    "fit_frequentist_glm",
    "fit_independent_normal",
    "generate_lag_surface",
    "generate_true_surface",
    "paper_main_protocol",
    "remove_durations",
    "resolve_protocol",
    "run_replicate",
    "run_study",
    "simulate_dataset",
    "tps_kernel",
    "unit_probabilities",
]
