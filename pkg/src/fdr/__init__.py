"""Free discontinuity regression: piecewise-smooth fits with an estimated jump set.

Scattered ``(x, y)`` data are binned onto a regular lattice, a lifted convex
relaxation of the Mumford-Shah energy is solved by a primal-dual iteration,
and the solution is decoded into a surface, its jump set and jump sizes.
"""
from .errors import FdrError
from .grid import BinnedData, GridSpec, PointCloud, bin_points, make_grid, read_csv, write_csv
from .inference import SubsamplingConfig, conformal_bands, subsample_bands
from .pipeline import Estimator, FitResult, fit
from .segmentation import FdrEstimate, Metrics, compute_metrics, extract_jump_set, threshold_level_set
from .simulate import Scenario, generate, rasterize_truth, run_monte_carlo
from .solver import SolveReport, SolverConfig, solve
from .sure import SureConfig, sure_search, sure_value

__all__ = [
    "BinnedData", "Estimator", "FdrError", "FdrEstimate", "FitResult", "GridSpec", "Metrics",
    "PointCloud", "Scenario", "SolveReport", "SolverConfig", "SubsamplingConfig", "SureConfig",
    "bin_points", "compute_metrics", "conformal_bands", "extract_jump_set", "fit", "generate",
    "make_grid", "rasterize_truth", "read_csv", "run_monte_carlo", "solve", "subsample_bands",
    "sure_search", "sure_value", "threshold_level_set", "write_csv",
]
