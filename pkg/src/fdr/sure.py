"""Monte Carlo SURE for choosing ``(lam, nu)``.

The risk is estimated on the binned cell means the solver actually sees.
For cell means ``Y_k`` with noise variances ``s_k^2`` and an estimator
``u(Y)``::

    eta = mean_k (Y_k - u_k)^2 - mean_k s_k^2
          + (2 / K) * sum_k s_k^2 * b_k * (u(Y + delta b) - u(Y))_k / delta

averaged over ``r_draws`` probe vectors ``b``. ``K`` is the number of
nonempty cells, so the identity estimator scores exactly ``mean s_k^2``
under Rademacher probes.
"""
from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import AllCandidatesFailed, FdrError
from .grid import BinnedData, GridSpec, PointCloud, bin_points, fill_empty
from .pipeline import with_theta
from .segmentation import threshold_level_set
from .solver import SolverConfig, solve

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SureConfig:
    """Search and Monte Carlo settings.

    Parameters
    ----------
    sigma : float or None
        Noise sd of a single observation; estimated from within-cell
        scatter when None.
    delta : float or None
        Finite-difference step of the divergence probe, in response units.
        None uses one lifted level, ``value_span / s_levels``: the fit is
        quantized to levels, so smaller steps mostly measure level flips.
        Analytic estimators passed to :func:`sure_value` get 0.01.
    r_draws : int
        Number of probe vectors averaged.
    lambda_range, nu_range : tuple
        Search intervals.
    grid_size : tuple
        ``(n_lambda, n_nu)``; the candidates are the product of the sampled
        values.
    log_uniform : bool
        Sample on a log scale instead of uniformly.
    probe : {"gaussian", "rademacher"}
        Distribution of the probe entries.
    variance : {"binned", "raw"}
        ``"binned"`` uses ``sigma^2 / count`` per cell, ``"raw"`` uses ``sigma^2``.
    seed : int
    """

    sigma: float | None = None
    delta: float | None = None
    r_draws: int = 3
    lambda_range: tuple = (1.0, 500.0)
    nu_range: tuple = (5e-4, 0.1)
    grid_size: tuple = (20, 20)
    log_uniform: bool = False
    probe: str = "gaussian"
    variance: str = "binned"
    seed: int = 0

    def __post_init__(self):
        if self.delta is not None and not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.r_draws < 1:
            raise ValueError("r_draws must be >= 1")
        for name in ("lambda_range", "nu_range"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise ValueError(f"{name} must be positive and ordered")
        if min(self.grid_size) < 1:
            raise ValueError("grid_size entries must be >= 1")
        if self.probe not in ("gaussian", "rademacher"):
            raise ValueError("probe must be 'gaussian' or 'rademacher'")
        if self.variance not in ("binned", "raw"):
            raise ValueError("variance must be 'binned' or 'raw'")
        if self.sigma is not None and self.sigma < 0:
            raise ValueError("sigma must be >= 0")


def estimate_sigma(cloud: PointCloud, grid: GridSpec) -> float:
    """Pooled within-cell standard deviation of the responses."""
    flat = grid.flat_index(cloud.x)
    count = np.bincount(flat, minlength=grid.n_spatial)
    mean = np.bincount(flat, weights=cloud.y, minlength=grid.n_spatial) / np.maximum(count, 1)
    ss = np.sum((cloud.y - mean[flat]) ** 2)
    dof = cloud.n - np.count_nonzero(count)
    if dof <= 0:
        raise FdrError("cannot estimate sigma: every cell holds at most one point")
    return float(np.sqrt(ss / dof))


def probes(cfg: SureConfig, size: int) -> np.ndarray:
    """The ``(r_draws, size)`` probe matrix, a pure function of ``cfg.seed``."""
    rng = np.random.default_rng(cfg.seed)
    if cfg.probe == "rademacher":
        return rng.choice(np.array([-1.0, 1.0]), size=(cfg.r_draws, size))
    return rng.standard_normal((cfg.r_draws, size))


def mc_sure(y, var, fn: Callable, delta: float, b: np.ndarray, u0=None) -> float:
    """Monte Carlo SURE of ``fn`` at data ``y`` with per-entry variances ``var``.

    ``b`` holds one probe per row; ``u0`` is ``fn(y)`` when already known.
    """
    y = np.asarray(y, dtype=float)
    var = np.broadcast_to(np.asarray(var, dtype=float), y.shape)
    u0 = fn(y) if u0 is None else u0
    base = np.mean((y - u0) ** 2) - np.mean(var)
    etas = []
    for br in b:
        div = np.sum(var * br * (fn(y + delta * br) - u0)) / delta
        etas.append(base + 2.0 * div / y.size)
    return float(np.mean(etas))


class _SolverEstimator:
    """``y -> u_hat`` on nonempty cells.

    Every call solves from a cold start so the perturbed fits are the same
    deterministic map of the data as the base fit; warm starts at a fixed
    iteration budget bias the finite-difference divergence.
    """

    def __init__(self, binned: BinnedData, grid: GridSpec, cfg: SolverConfig):
        self.binned = binned
        self.grid = grid
        self.cfg = cfg
        self.keep = ~binned.empty_mask

    def __call__(self, y):
        vals = np.zeros(self.grid.n_cells)
        vals[self.keep] = y
        f_hat = fill_empty(vals, self.binned.empty_mask) if self.binned.empty_mask.any() else vals
        data = replace(self.binned, f_hat=f_hat)
        report = solve(data, self.grid, self.cfg)
        return threshold_level_set(report.v_star, self.grid)[self.keep]


def cell_variances(binned: BinnedData, sigma: float, mode: str) -> np.ndarray:
    keep = ~binned.empty_mask
    if mode == "raw":
        return np.full(int(keep.sum()), sigma ** 2)
    return sigma ** 2 / binned.count[keep]


def sure_value(
    cloud: PointCloud,
    grid: GridSpec,
    theta: tuple,
    cfg: SureConfig,
    solver_cfg: SolverConfig | None = None,
    estimator: Callable | None = None,
) -> float:
    """Averaged MC-SURE of the fit at ``theta = (lam, nu)``.

    ``estimator`` replaces the solver with any map from nonempty-cell means
    to fitted values (used for analytic checks).
    """
    binned = bin_points(cloud, grid)
    sigma = cfg.sigma if cfg.sigma is not None else estimate_sigma(cloud, grid)
    return _sure_binned(binned, grid, theta, cfg, sigma, solver_cfg, estimator)


def _sure_binned(binned, grid, theta, cfg, sigma, solver_cfg, estimator=None) -> float:
    keep = ~binned.empty_mask
    y = binned.f_hat[keep]
    var = cell_variances(binned, sigma, cfg.variance)
    delta = cfg.delta
    if estimator is None:
        base_cfg = solver_cfg if solver_cfg is not None else SolverConfig(lam=1.0, nu=1.0)
        estimator = _SolverEstimator(binned, grid, with_theta(base_cfg, *theta))
        if delta is None:
            delta = grid.value_span / grid.s_levels
    elif delta is None:
        delta = 0.01
    return mc_sure(y, var, estimator, delta, probes(cfg, y.size))


def candidate_grid(cfg: SureConfig) -> list:
    """Sampled ``(lam, nu)`` candidates in row-major (lam outer) order."""
    rng = np.random.default_rng([cfg.seed, 1])

    def draw(lo, hi, k):
        if cfg.log_uniform:
            vals = np.exp(rng.uniform(np.log(lo), np.log(hi), k))
        else:
            vals = rng.uniform(lo, hi, k)
        return np.sort(vals) if k > 1 else np.array([lo if lo == hi else vals[0]])

    lams = draw(*cfg.lambda_range, cfg.grid_size[0])
    nus = draw(*cfg.nu_range, cfg.grid_size[1])
    return [(float(l), float(v)) for l in lams for v in nus]


def _eval_candidate(args):
    binned, grid, theta, cfg, sigma, solver_cfg = args
    try:
        return _sure_binned(binned, grid, theta, cfg, sigma, solver_cfg), "ok"
    except FdrError as exc:
        log.warning("candidate lam=%.4g nu=%.4g failed: %s", theta[0], theta[1], exc)
        return float("inf"), f"failed: {type(exc).__name__}"


def sure_search(
    cloud: PointCloud,
    grid: GridSpec,
    cfg: SureConfig,
    solver_cfg: SolverConfig | None = None,
    workers: int = 1,
    candidates: list | None = None,
):
    """Grid search for the SURE minimizer.

    Returns ``(lam_star, nu_star, table)`` where ``table`` lists one dict per
    candidate with keys ``index, lam, nu, sure, status``. Candidates that fail
    score ``inf``; ties resolve to the lowest index.
    """
    binned = bin_points(cloud, grid)
    sigma = cfg.sigma if cfg.sigma is not None else estimate_sigma(cloud, grid)
    cands = candidate_grid(cfg) if candidates is None else [tuple(map(float, c)) for c in candidates]
    tasks = [(binned, grid, th, cfg, sigma, solver_cfg) for th in cands]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_eval_candidate, tasks))
    else:
        results = [_eval_candidate(t) for t in tasks]
    table = [
        {"index": i, "lam": th[0], "nu": th[1], "sure": val, "status": status}
        for i, (th, (val, status)) in enumerate(zip(cands, results))
    ]
    scores = np.array([row["sure"] for row in table])
    if not np.isfinite(scores).any():
        raise AllCandidatesFailed("every SURE candidate failed")
    best = table[int(np.argmin(scores))]
    return best["lam"], best["nu"], table


def write_table(table: list, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "lam", "nu", "sure", "status"])
        for row in table:
            w.writerow([row["index"], repr(row["lam"]), repr(row["nu"]), repr(row["sure"]), row["status"]])
