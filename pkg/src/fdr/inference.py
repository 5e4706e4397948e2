"""Uniform confidence bands by subsampling, and split-conformal prediction bands."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import FdrError, TooFewReps
from .grid import GridSpec, PointCloud, bin_points
from .pipeline import fit, with_theta
from .segmentation import extract_jump_set, forward_differences, max_axis_difference
from .solver import SolverConfig

log = logging.getLogger(__name__)

MAX_DROP_FRACTION = 0.2
FALLBACK_RATE = 0.5
DEFAULT_FRACTIONS = (0.05, 0.1, 0.2, 0.4)
RANGE_RTOL = 1e-9


@dataclass(frozen=True)
class SubsamplingConfig:
    """Subsampling settings.

    ``block_sizes`` of None means ``floor(n * f)`` for ``f`` in
    ``(0.05, 0.1, 0.2, 0.4)``.
    """

    j_reps: int = 100
    block_sizes: tuple | None = None
    alpha: float = 0.05
    quantile_pairs: tuple = ((0.25, 0.75), (0.10, 0.90))
    seed: int = 0

    def __post_init__(self):
        if self.j_reps < 1:
            raise ValueError("j_reps must be >= 1")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        for s, t in self.quantile_pairs:
            if not 0 < s < t < 1:
                raise ValueError(f"bad quantile pair {(s, t)}")

    def sizes(self, n: int) -> tuple:
        sizes = self.block_sizes
        if sizes is None:
            sizes = tuple(int(n * f) for f in DEFAULT_FRACTIONS)
        sizes = tuple(int(b) for b in sizes)
        if len(sizes) < 1 or any(not 1 <= b < n for b in sizes):
            raise ValueError(f"block sizes must lie in [1, {n}), got {sizes}")
        return sizes


@dataclass
class BandResult:
    u_hat: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    beta_hat: float
    z_alpha: float
    diff: np.ndarray
    diff_lower: np.ndarray
    diff_upper: np.ndarray
    beta_hat_diff: float
    jump_mask: np.ndarray
    significant_jump_mask: np.ndarray
    n_dropped: int


class FdrFitter:
    """Picklable ``(cloud, grid) -> u_hat`` using the solver, optionally warm-started."""

    def __init__(self, theta: tuple, solver_cfg: SolverConfig | None = None, init=None):
        base = solver_cfg if solver_cfg is not None else SolverConfig(lam=1.0, nu=1.0)
        self.cfg = with_theta(base, *theta)
        self.init = init

    def __call__(self, cloud: PointCloud, grid: GridSpec) -> np.ndarray:
        return fit(cloud, grid, self.cfg, init=self.init).estimate.u_hat


def cell_means(cloud: PointCloud, grid: GridSpec) -> np.ndarray:
    """Binned per-cell means; a minimal estimator for checking rate recovery."""
    return bin_points(cloud, grid).f_hat


def fpc(b: int, n: int | None) -> float:
    """Finite-population factor ``sqrt(1 - b/n)`` of a size-``b`` draw without replacement."""
    return 1.0 if n is None else math.sqrt(1.0 - b / n)


def estimate_rate(z: np.ndarray, sizes, quantile_pairs, n: int | None = None) -> float:
    """Slope estimate ``beta`` from the spread of ``Z[:, k]`` across sizes.

    For each size, the log of every inter-quantile range is averaged; sizes
    whose ranges collapse to zero (relative to the values) are skipped. With the full sample size
    ``n`` the ranges are first divided by :func:`fpc`, which removes the
    shrinkage of subsamples that are a sizeable share of the data. With
    fewer than two usable sizes the square-root rate is returned.
    """
    logs, logb = [], []
    for k, b in enumerate(sizes):
        col = z[:, k]
        col = col[np.isfinite(col)]
        if col.size < 2:
            continue
        ranges = [np.quantile(col, t) - np.quantile(col, s) for s, t in quantile_pairs]
        # rounding noise between equal-valued fits is not spread
        if min(ranges) <= RANGE_RTOL * np.max(np.abs(col)):
            continue
        logs.append(np.mean(np.log(ranges)) - math.log(fpc(b, n)))
        logb.append(np.log(b))
    if len(logs) < 2 or np.var(logb) == 0:
        log.warning("rate estimate degenerate; falling back to beta=%.2f", FALLBACK_RATE)
        return FALLBACK_RATE
    logs, logb = np.array(logs), np.array(logb)
    return float(-np.cov(logs, logb, bias=True)[0, 1] / np.var(logb))


def order_statistic(values: np.ndarray, alpha: float) -> float:
    """The ``ceil((m + 1)(1 - alpha))``-th smallest of ``m`` values (inf past the end)."""
    vals = np.sort(np.asarray(values, dtype=float))
    m = vals.size
    k = math.ceil((m + 1) * (1 - alpha) - 1e-9)
    k = max(k, 1)
    return float(vals[k - 1]) if k <= m else math.inf


def _subsample_task(args):
    cloud, grid, estimator, size, seed = args
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(cloud.n, size=size, replace=False))
    try:
        return estimator(cloud.subset(idx), grid)
    except FdrError as exc:
        log.warning("subsample of size %d failed: %s", size, exc)
        return None


def subsample_bands(
    cloud: PointCloud,
    grid: GridSpec,
    theta: tuple,
    cfg: SubsamplingConfig,
    solver_cfg: SolverConfig | None = None,
    estimator=None,
    workers: int = 1,
) -> BandResult:
    """Uniform bands for the surface and its forward differences.

    Every subsample is drawn without replacement and refit on the same grid
    from a cold start with the full-sample iteration budget, so every fit is
    the same map of its data. ``estimator(cloud, grid) -> u_hat`` overrides
    the solver.
    """
    lam, nu = theta
    sizes = cfg.sizes(cloud.n)
    if estimator is None:
        full = fit(cloud, grid, with_theta(solver_cfg or SolverConfig(1.0, 1.0), lam, nu))
        u_full = full.estimate.u_hat
        estimator = FdrFitter(theta, solver_cfg)
    else:
        u_full = estimator(cloud, grid)
    t_full = max_axis_difference(forward_differences(u_full))

    tasks = [
        (cloud, grid, estimator, b, int(np.random.SeedSequence([cfg.seed, k, j]).generate_state(1)[0]))
        for k, b in enumerate(sizes) for j in range(cfg.j_reps)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            fits = list(pool.map(_subsample_task, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    else:
        fits = [_subsample_task(t) for t in tasks]

    n_dropped = sum(f is None for f in fits)
    if n_dropped > MAX_DROP_FRACTION * len(fits):
        raise TooFewReps(f"{n_dropped} of {len(fits)} subsample fits failed")
    z = np.full((cfg.j_reps, len(sizes)), np.nan)
    zd = np.full_like(z, np.nan)
    for i, u_star in enumerate(fits):
        if u_star is None:
            continue
        k, j = divmod(i, cfg.j_reps)
        z[j, k] = np.max(np.abs(u_star - u_full))
        zd[j, k] = np.max(np.abs(max_axis_difference(forward_differences(u_star)) - t_full))

    beta = estimate_rate(z, sizes, cfg.quantile_pairs, cloud.n)
    beta_d = estimate_rate(zd, sizes, cfg.quantile_pairs, cloud.n)
    b_last = sizes[-1]
    col, cold = z[:, -1], zd[:, -1]
    z_alpha = order_statistic(b_last ** beta * col[np.isfinite(col)], cfg.alpha)
    zd_alpha = order_statistic(b_last ** beta_d * cold[np.isfinite(cold)], cfg.alpha)
    half = z_alpha / cloud.n ** beta
    half_d = zd_alpha / cloud.n ** beta_d

    jump_mask, _, _ = extract_jump_set(u_full, grid, nu)
    lo_d, hi_d = t_full - half_d, t_full + half_d
    return BandResult(
        u_hat=u_full,
        lower=u_full - half,
        upper=u_full + half,
        beta_hat=beta,
        z_alpha=z_alpha,
        diff=t_full,
        diff_lower=lo_d,
        diff_upper=hi_d,
        beta_hat_diff=beta_d,
        jump_mask=jump_mask,
        significant_jump_mask=jump_mask & ((lo_d > 0) | (hi_d < 0)),
        n_dropped=n_dropped,
    )


@dataclass
class ConformalResult:
    u_hat: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    d_alpha: float
    diff: np.ndarray
    diff_lower: np.ndarray
    diff_upper: np.ndarray
    d_alpha_diff: float
    jump_mask: np.ndarray
    significant_jump_mask: np.ndarray


def conformal_bands(
    cloud: PointCloud,
    grid: GridSpec,
    theta: tuple,
    alpha: float,
    seed: int = 0,
    solver_cfg: SolverConfig | None = None,
    estimator=None,
) -> ConformalResult:
    """Split-conformal bands: fit on one half, calibrate on the other.

    Residuals compare each held-out response with the fit in its cell. The
    jump variant rasterizes the held-out responses by nearest point onto
    the cell centres and calibrates on residuals of forward differences.
    """
    if cloud.n < 2:
        raise ValueError("conformal bands need at least two points")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(cloud.n)
    first, second = np.sort(perm[: cloud.n // 2]), np.sort(perm[cloud.n // 2:])
    train, calib = cloud.subset(first), cloud.subset(second)
    if estimator is None:
        estimator = FdrFitter(theta, solver_cfg)
    u_hat = estimator(train, grid)

    resid = np.abs(calib.y - u_hat.ravel()[grid.flat_index(calib.x)])
    d_alpha = order_statistic(resid, alpha)

    _, nearest = cKDTree(calib.x).query(grid.cell_centers())
    y_raster = calib.y[nearest].reshape(grid.n_cells)
    t_hat = max_axis_difference(forward_differences(u_hat))
    t_obs = max_axis_difference(forward_differences(y_raster))
    d_alpha_diff = order_statistic(np.abs(t_obs - t_hat).ravel(), alpha)

    jump_mask, _, _ = extract_jump_set(u_hat, grid, theta[1])
    lo_d, hi_d = t_hat - d_alpha_diff, t_hat + d_alpha_diff
    return ConformalResult(
        u_hat=u_hat,
        lower=u_hat - d_alpha,
        upper=u_hat + d_alpha,
        d_alpha=d_alpha,
        diff=t_hat,
        diff_lower=lo_d,
        diff_upper=hi_d,
        d_alpha_diff=d_alpha_diff,
        jump_mask=jump_mask,
        significant_jump_mask=jump_mask & ((lo_d > 0) | (hi_d < 0)),
    )
