"""Synthetic piecewise-smooth scenarios with known truth, and a Monte Carlo driver.

Each scenario is a smooth base plus a jump component. The base is rescaled
so that its standard deviation over the unit box equals a fixed constant per
dimension; a standardized jump ``cohens_d`` then has absolute size
``cohens_d * base_sd``.

* 1D: steps at 0.2, 0.4, 0.6, 0.8.
* 2D: a disc of radius 0.25 centred in the unit square.
* 3D: a ball of radius 0.3 centred in the unit cube.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .grid import GridSpec, PointCloud, make_grid
from .segmentation import FdrEstimate, Metrics, Truth, compute_metrics

log = logging.getLogger(__name__)

BASE_SD = {1: 0.4556, 2: 0.15008, 3: 0.1476}
STEP_LOCATIONS = (0.2, 0.4, 0.6, 0.8)
FOUR_STEP_COHENS_D = (0.2823, 0.4682, 0.7005, -0.9262)
DISC_RADIUS = 0.25
BALL_RADIUS = 0.3


def _raw_base(x: np.ndarray) -> np.ndarray:
    # gently tilted planes with a low-frequency bump; the tilt keeps the
    # surface free of steep smooth ramps that a coarse lift would stair-step
    d = x.shape[1]
    if d == 1:
        return np.sin(2 * np.pi * x[:, 0]) + x[:, 0]
    bump = np.prod(np.sin(np.pi * x), axis=1)
    if d == 2:
        return x[:, 0] + 0.5 * x[:, 1] + 0.3 * bump
    if d == 3:
        return x[:, 0] + 0.5 * x[:, 1] + 0.25 * x[:, 2] + 0.3 * bump
    raise ValueError(f"no base function for d={d}")


@lru_cache(maxsize=None)
def _base_moments(d: int) -> tuple:
    # midpoint rule on a regular lattice; accurate to ~1e-7 for these bases
    m = {1: 200_000, 2: 1000, 3: 100}[d]
    ax = (np.arange(m) + 0.5) / m
    pts = np.stack([a.ravel() for a in np.meshgrid(*([ax] * d), indexing="ij")], axis=1)
    vals = _raw_base(pts)
    return float(vals.mean()), float(vals.std())


def base_function(x: np.ndarray) -> np.ndarray:
    """Smooth base with mean 0.5 and standard deviation ``BASE_SD[d]`` on the unit box."""
    x = np.atleast_2d(x)
    mean, sd = _base_moments(x.shape[1])
    return 0.5 + BASE_SD[x.shape[1]] * (_raw_base(x) - mean) / sd


@dataclass(frozen=True)
class Scenario:
    """Simulation setup.

    ``cohens_d`` is one value for the 2D/3D geometries and either one value
    (repeated) or four values for the 1D steps.
    """

    dim: int
    cohens_d: float | tuple = 0.5
    sigma: float = 0.05
    n: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError("dim must be 1, 2 or 3")
        if self.sigma < 0 or self.n < 1:
            raise ValueError("sigma must be >= 0 and n >= 1")

    @property
    def jump_sizes(self) -> np.ndarray:
        d = np.atleast_1d(np.asarray(self.cohens_d, dtype=float))
        if self.dim == 1 and d.size == 1:
            d = np.repeat(d, len(STEP_LOCATIONS))
        if self.dim == 1 and d.size != len(STEP_LOCATIONS):
            raise ValueError("1D scenarios take one or four standardized jumps")
        if self.dim > 1 and d.size != 1:
            raise ValueError("2D/3D scenarios take a single standardized jump")
        return d * BASE_SD[self.dim]

    @property
    def alpha(self) -> float:
        """Mean absolute jump size."""
        return float(np.mean(np.abs(self.jump_sizes)))


def four_step_scenario(seed: int = 0, n: int = 5000) -> Scenario:
    return Scenario(dim=1, cohens_d=FOUR_STEP_COHENS_D, sigma=0.05, n=n, seed=seed)


def jump_part(scenario: Scenario, x: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(x)
    sizes = scenario.jump_sizes
    if scenario.dim == 1:
        return sum(h * (x[:, 0] >= loc) for h, loc in zip(sizes, STEP_LOCATIONS))
    radius = DISC_RADIUS if scenario.dim == 2 else BALL_RADIUS
    inside = np.sum((x - 0.5) ** 2, axis=1) < radius ** 2
    return sizes[0] * inside


def truth_function(scenario: Scenario, x: np.ndarray) -> np.ndarray:
    return base_function(x) + jump_part(scenario, x)


def generate(scenario: Scenario, seed: int | None = None) -> PointCloud:
    """Draw ``n`` points uniformly on the unit box with Gaussian noise."""
    rng = np.random.default_rng(scenario.seed if seed is None else seed)
    x = rng.uniform(0.0, 1.0, size=(scenario.n, scenario.dim))
    y = truth_function(scenario, x) + scenario.sigma * rng.standard_normal(scenario.n)
    return PointCloud(x, y)


def rasterize_truth(scenario: Scenario, grid: GridSpec) -> Truth:
    """Truth at cell centres; a cell is on the jump set when the jump part
    changes between it and its forward neighbour along some axis."""
    centers = grid.cell_centers()
    surface = truth_function(scenario, centers).reshape(grid.n_cells)
    jumps = jump_part(scenario, centers).reshape(grid.n_cells)
    diffs = np.zeros((grid.d,) + grid.n_cells)
    for j in range(grid.d):
        lo = [slice(None)] * grid.d
        hi = [slice(None)] * grid.d
        lo[j] = slice(None, -1)
        hi[j] = slice(1, None)
        diffs[j][tuple(lo)] = jumps[tuple(hi)] - jumps[tuple(lo)]
    mask = np.any(diffs != 0, axis=0)
    idx = np.argmax(np.abs(diffs), axis=0)
    size = np.take_along_axis(diffs, idx[None], axis=0)[0]
    return Truth(surface, mask, np.where(mask, size, 0.0))


def default_cells(scenario: Scenario) -> int:
    """Per-axis cells: ``n / 20`` in 1D, and roughly four points per cell above."""
    if scenario.dim == 1:
        return max(2, scenario.n // 20)
    return max(2, int(round((scenario.n / 4) ** (1.0 / scenario.dim))))


def scenario_grid(scenario: Scenario, cloud: PointCloud, n_cells=None, s_levels: int = 32) -> GridSpec:
    cells = default_cells(scenario) if n_cells is None else n_cells
    return make_grid(cloud, cells, s_levels=s_levels, domain_box=[(0.0, 1.0)] * scenario.dim)


Estimator = Callable[[PointCloud, GridSpec, float, float], FdrEstimate]


@dataclass
class MonteCarloConfig:
    """Settings shared by every row of a Monte Carlo table.

    ``theta`` maps a family key ``(dim, cohens_d)`` to ``(lam, nu)``; a
    missing family is tuned by SURE on the first replicate of its largest-n
    scenario when ``sure`` is given.
    """

    estimator: Estimator
    n_cells: Callable[[Scenario], int] | int | None = None
    s_levels: int = 32
    theta: dict = field(default_factory=dict)
    sure: Callable[[PointCloud, GridSpec], tuple] | None = None


def family_key(scenario: Scenario) -> tuple:
    d = scenario.cohens_d
    return (scenario.dim, tuple(d) if isinstance(d, (tuple, list)) else float(d))


def rep_seed(scenario: Scenario, rep: int) -> int:
    return int(np.random.SeedSequence([scenario.seed, scenario.n, rep]).generate_state(1)[0])


def _cells(cfg: MonteCarloConfig, scenario: Scenario):
    if callable(cfg.n_cells):
        return cfg.n_cells(scenario)
    return cfg.n_cells


def run_rep(scenario: Scenario, rep: int, cfg: MonteCarloConfig, theta: tuple) -> Metrics:
    cloud = generate(scenario, seed=rep_seed(scenario, rep))
    grid = scenario_grid(scenario, cloud, _cells(cfg, scenario), cfg.s_levels)
    estimate = cfg.estimator(cloud, grid, *theta)
    return compute_metrics(estimate, rasterize_truth(scenario, grid))


def _run_rep_args(args):
    return run_rep(*args)


TABLE_COLUMNS = ("dim", "cohens_d", "n", "alpha", "alpha_hat", "mse_u", "mse_tau",
                 "bias_tau", "fnr", "fpr", "lam", "nu", "reps")


def run_monte_carlo(
    scenarios: Sequence[Scenario],
    reps: int,
    cfg: MonteCarloConfig,
    workers: int = 1,
) -> list:
    """Average :class:`Metrics` over ``reps`` replicates per scenario.

    Returns one dict per scenario with the columns of ``TABLE_COLUMNS``.
    Replicates are seeded from ``(scenario.seed, n, rep)`` so results do not
    depend on ``workers``.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    thetas = dict(cfg.theta)
    for sc in sorted(scenarios, key=lambda s: -s.n):
        key = family_key(sc)
        if key in thetas:
            continue
        if cfg.sure is None:
            raise ValueError(f"no theta for family {key} and no SURE tuner configured")
        cloud = generate(sc, seed=rep_seed(sc, 0))
        grid = scenario_grid(sc, cloud, _cells(cfg, sc), cfg.s_levels)
        thetas[key] = tuple(cfg.sure(cloud, grid))
        log.info("family %s tuned to lam=%.4g nu=%.4g", key, *thetas[key])

    tasks = [(sc, r, cfg, thetas[family_key(sc)]) for sc in scenarios for r in range(reps)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_rep_args, tasks))
    else:
        results = [_run_rep_args(t) for t in tasks]

    rows = []
    for i, sc in enumerate(scenarios):
        chunk = results[i * reps:(i + 1) * reps]
        avg = {k: float(np.mean([getattr(m, k) for m in chunk])) for k in chunk[0].as_dict()}
        lam, nu = thetas[family_key(sc)]
        d = sc.cohens_d
        rows.append({
            "dim": sc.dim,
            "cohens_d": ";".join(str(v) for v in d) if isinstance(d, (tuple, list)) else float(d),
            "n": sc.n,
            "alpha": sc.alpha,
            **{k: avg[k] for k in ("alpha_hat", "mse_u", "mse_tau", "bias_tau", "fnr", "fpr")},
            "lam": float(lam),
            "nu": float(nu),
            "reps": reps,
        })
    return rows
