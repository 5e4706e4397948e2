"""End-to-end fit: bin, solve, decode."""
from __future__ import annotations

from dataclasses import dataclass, replace

from .grid import BinnedData, GridSpec, PointCloud, bin_points
from .segmentation import FdrEstimate, estimate_from_field
from .solver import DualState, SolveReport, SolverConfig, solve


@dataclass
class FitResult:
    estimate: FdrEstimate
    report: SolveReport
    binned: BinnedData


def with_theta(cfg: SolverConfig, lam: float, nu: float) -> SolverConfig:
    return replace(cfg, lam=float(lam), nu=float(nu))


def fit_binned(
    binned: BinnedData,
    grid: GridSpec,
    cfg: SolverConfig,
    init: DualState | None = None,
) -> FitResult:
    report = solve(binned, grid, cfg, init=init)
    return FitResult(estimate_from_field(report.v_star, grid, cfg.nu), report, binned)


def fit(
    cloud: PointCloud,
    grid: GridSpec,
    cfg: SolverConfig,
    init: DualState | None = None,
    winsor_q: float | None = None,
    density: str = "histogram",
) -> FitResult:
    """Bin ``cloud`` on ``grid`` and solve with ``cfg``."""
    binned = bin_points(cloud, grid, winsor_q=winsor_q, density=density)
    return fit_binned(binned, grid, cfg, init=init)


class Estimator:
    """Picklable ``(cloud, grid, lam, nu) -> FdrEstimate`` wrapping :func:`fit`."""

    def __init__(self, solver_cfg: SolverConfig, **fit_kwargs):
        self.solver_cfg = solver_cfg
        self.fit_kwargs = fit_kwargs

    def __call__(self, cloud: PointCloud, grid: GridSpec, lam: float, nu: float) -> FdrEstimate:
        return fit(cloud, grid, with_theta(self.solver_cfg, lam, nu), **self.fit_kwargs).estimate
