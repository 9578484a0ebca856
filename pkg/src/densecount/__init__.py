"""Density-map berry counting: ground truth synthesis, datasets, metrics and
grape yield models."""

__version__ = "0.1.0"

from .density import (
    DensityMap,
    KernelSpec,
    PointAnnotationSet,
    adaptive_sigmas,
    downsample,
    generate_density_map,
    integrate,
    knn_mean_distance,
    render_gaussian,
)
from .dgrd import read_dgrd, write_dgrd
from .metrics import CountPair, MetricsReport, evaluate, grouped_report, mae, mse, overall_mae

__all__ = [
    "CountPair",
    "DensityMap",
    "KernelSpec",
    "MetricsReport",
    "PointAnnotationSet",
    "adaptive_sigmas",
    "downsample",
    "evaluate",
    "generate_density_map",
    "grouped_report",
    "integrate",
    "knn_mean_distance",
    "mae",
    "mse",
    "overall_mae",
    "read_dgrd",
    "render_gaussian",
    "write_dgrd",
]
