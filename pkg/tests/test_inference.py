import math

import numpy as np
import pytest

from fdr.errors import FdrError, TooFewReps
from fdr.grid import PointCloud, make_grid
from fdr.inference import (
    FALLBACK_RATE, SubsamplingConfig, cell_means, conformal_bands, estimate_rate, fpc,
    order_statistic, subsample_bands,
)
from fdr.solver import SolverConfig


def normal_cloud(n=4000, seed=0, d=1):
    rng = np.random.default_rng(seed)
    return PointCloud(rng.uniform(size=(n, d)), rng.normal(size=n))


class TestConfig:
    @pytest.mark.parametrize("kw", [{"j_reps": 0}, {"alpha": 1.0}, {"quantile_pairs": ((0.6, 0.4),)}])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            SubsamplingConfig(**kw)

    def test_default_sizes(self):
        assert SubsamplingConfig().sizes(1000) == (50, 100, 200, 400)

    def test_bad_sizes(self):
        with pytest.raises(ValueError):
            SubsamplingConfig(block_sizes=(10, 1000)).sizes(1000)


class TestOrderStatistic:
    def test_rank(self):
        vals = np.arange(1.0, 20.0)  # m = 19, (m + 1)(1 - 0.1) = 18
        assert order_statistic(vals[::-1], 0.1) == 18.0

    def test_past_the_end(self):
        assert order_statistic(np.arange(5.0), 0.01) == math.inf

    def test_smallest(self):
        # alpha = 1 - 1/(m + 1) selects the smallest residual
        vals = np.array([3.0, 1.0, 2.0, 5.0])
        assert order_statistic(vals, 1 - 1 / 5) == 1.0


class TestRate:
    def test_exact_power_law(self):
        sizes = (100, 200, 400, 800)
        rng = np.random.default_rng(0)
        base = rng.normal(size=(500, 1))
        z = base * np.array(sizes, dtype=float) ** -0.7
        assert estimate_rate(z, sizes, ((0.25, 0.75), (0.1, 0.9))) == pytest.approx(0.7)

    def test_fpc_removes_finite_population_shrinkage(self):
        n, sizes = 1000, (100, 200, 400, 800)
        z = np.random.default_rng(1).normal(size=(500, 1)) * np.array(
            [fpc(b, n) / math.sqrt(b) for b in sizes])
        assert estimate_rate(z, sizes, ((0.25, 0.75),), n) == pytest.approx(0.5)
        assert estimate_rate(z, sizes, ((0.25, 0.75),)) > 0.7

    def test_degenerate_falls_back(self):
        z = np.full((50, 3), 0.05)
        z += np.random.default_rng(2).normal(scale=1e-17, size=z.shape)
        assert estimate_rate(z, (10, 20, 40), ((0.25, 0.75),)) == FALLBACK_RATE


class TestSubsampling:
    def test_sample_mean_rate(self):
        cloud = normal_cloud()
        grid = make_grid(cloud, 4)
        res = subsample_bands(cloud, grid, (1.0, 1.0), SubsamplingConfig(j_reps=100, seed=3),
                              estimator=cell_means)
        assert res.beta_hat == pytest.approx(0.5, abs=0.1)
        assert np.all(res.lower < res.u_hat) and np.all(res.upper > res.u_hat)
        assert res.n_dropped == 0

    def test_workers_agree(self):
        cloud = normal_cloud(n=400)
        grid = make_grid(cloud, 4)
        cfg = SubsamplingConfig(j_reps=10, seed=1)
        a = subsample_bands(cloud, grid, (1.0, 1.0), cfg, estimator=cell_means, workers=1)
        b = subsample_bands(cloud, grid, (1.0, 1.0), cfg, estimator=cell_means, workers=2)
        np.testing.assert_array_equal(a.lower, b.lower)
        assert a.beta_hat == b.beta_hat

    def test_too_many_failures(self):
        cloud = normal_cloud(n=400)
        grid = make_grid(cloud, 4)
        with pytest.raises(TooFewReps):
            subsample_bands(cloud, grid, (1.0, 1.0), SubsamplingConfig(j_reps=5), estimator=_Failing(cloud.n))

    def test_solver_path_flags_step(self):
        rng = np.random.default_rng(4)
        x = rng.uniform(size=(1500, 1))
        y = np.where(x[:, 0] < 0.5, 0.0, 1.0) + 0.05 * rng.normal(size=1500)
        cloud = PointCloud(x, y)
        grid = make_grid(cloud, 30, domain_box=[(0.0, 1.0)])
        res = subsample_bands(cloud, grid, (100.0, 0.001), SubsamplingConfig(j_reps=20, seed=0),
                              SolverConfig(1.0, 1.0, max_iter=150))
        k = int(np.argmax(np.abs(res.diff)))
        assert abs(grid.axis_centers(0)[k] - 0.5) <= 1.5 / 30
        assert res.significant_jump_mask[k]
        assert not res.significant_jump_mask[~res.jump_mask].any()


class _Failing:
    """Fails on every subsample, succeeds on the full sample."""

    def __init__(self, n):
        self.n = n

    def __call__(self, cloud, grid):
        if cloud.n < self.n:
            raise FdrError("boom")
        return cell_means(cloud, grid)


class TestConformal:
    def test_perfect_fit_collapses(self):
        rng = np.random.default_rng(0)
        x = rng.uniform(size=(200, 1))
        cloud = PointCloud(x, np.where(x[:, 0] < 0.5, 1.0, 2.0))
        grid = make_grid(cloud, 2, domain_box=[(0.0, 1.0)])
        res = conformal_bands(cloud, grid, (1.0, 0.1), 0.1, estimator=cell_means)
        assert res.d_alpha == 0.0
        np.testing.assert_array_equal(res.lower, res.u_hat)

    def test_edge_alpha(self):
        cloud = normal_cloud(n=40)
        grid = make_grid(cloud, 2)
        m = cloud.n - cloud.n // 2
        res = conformal_bands(cloud, grid, (1.0, 0.1), 1 - 1 / (m + 1), estimator=cell_means)
        perm = np.random.default_rng(0).permutation(40)
        train, calib = cloud.subset(np.sort(perm[:20])), cloud.subset(np.sort(perm[20:]))
        u = cell_means(train, grid)
        resid = np.abs(calib.y - u.ravel()[grid.flat_index(calib.x)])
        assert res.d_alpha == pytest.approx(resid.min())

    def test_coverage_with_cell_means(self):
        covered = []
        for rep in range(100):
            cloud = normal_cloud(n=400, seed=rep)
            grid = make_grid(cloud, 4, domain_box=[(0.0, 1.0)])
            res = conformal_bands(cloud, grid, (1.0, 0.1), 0.1, seed=rep, estimator=cell_means)
            test = normal_cloud(n=200, seed=10_000 + rep)
            idx = grid.flat_index(test.x)
            covered.append(np.mean(np.abs(test.y - res.u_hat.ravel()[idx]) <= res.d_alpha))
        assert 0.87 <= np.mean(covered) <= 0.9 + 2 / 202 + 0.03

    def test_rejects(self):
        cloud = normal_cloud(n=40)
        grid = make_grid(cloud, 2)
        with pytest.raises(ValueError):
            conformal_bands(cloud, grid, (1.0, 0.1), 1.5, estimator=cell_means)
        with pytest.raises(ValueError):
            conformal_bands(cloud.subset(np.array([0])), grid, (1.0, 0.1), 0.1, estimator=cell_means)
