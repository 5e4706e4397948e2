import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fdr.errors import GridMismatch
from fdr.grid import GridSpec
from fdr.segmentation import (
    FdrEstimate, Truth, compute_metrics, estimate_from_field, extract_jump_set,
    forward_differences, max_axis_difference, threshold_level_set,
)
from fdr.simulate import Scenario, rasterize_truth


def grid_of(n_cells, s_levels, value_range=(0.0, 1.0)):
    d = len(n_cells)
    return GridSpec(d, tuple(n_cells), s_levels, ((0.0, 1.0),) * d, value_range)


def subgraph(u, s_levels):
    """Binary lifted field: level k (1-based) is on when (k - 1) / S < u."""
    lower = np.arange(s_levels) / s_levels
    return (lower < np.asarray(u)[..., None]).astype(float)


class TestThreshold:
    def test_layer_count(self):
        grid = grid_of((2,), 10)
        np.testing.assert_allclose(threshold_level_set(subgraph([0.6, 0.6], 10), grid), 0.55)

    def test_minimal_subgraph(self):
        grid = grid_of((3,), 8, value_range=(-1.0, 3.0))
        v = np.zeros((3, 8))
        v[:, 0] = 1.0
        np.testing.assert_allclose(threshold_level_set(v, grid), -1.0 + 4.0 * 0.5 / 8)

    @pytest.mark.parametrize("t", [0.01, 0.3, 0.5, 0.99])
    def test_threshold_invariance_on_binary(self, t):
        grid = grid_of((4, 3), 12)
        v = subgraph(np.random.default_rng(0).uniform(size=(4, 3)), 12)
        np.testing.assert_array_equal(threshold_level_set(v, grid, t), threshold_level_set(v, grid))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_monotone(self, seed):
        rng = np.random.default_rng(seed)
        grid = grid_of((5,), 9)
        v = rng.uniform(size=(5, 9))
        w = np.minimum(v + rng.uniform(0, 0.5, size=v.shape), 1.0)
        assert np.all(threshold_level_set(w, grid) >= threshold_level_set(v, grid))

    def test_shape_mismatch(self):
        with pytest.raises(GridMismatch):
            threshold_level_set(np.zeros((3, 4)), grid_of((3,), 5))


class TestJumpSet:
    def test_constant(self):
        mask, size, mag = extract_jump_set(np.full((4, 4), 0.3), grid_of((4, 4), 8), 1e-6)
        assert not mask.any() and not size.any() and not mag.any()

    def test_limits_in_nu(self):
        u = np.random.default_rng(1).normal(size=(5, 6))
        grid = grid_of((5, 6), 8, (-3.0, 3.0))
        assert not extract_jump_set(u, grid, 1e12)[0].any()
        mask, _, mag = extract_jump_set(u, grid, 1e-300)
        np.testing.assert_array_equal(mask, mag > 0)

    def test_step_size_and_location(self):
        grid = grid_of((6,), 8, (0.0, 2.0))
        u = np.array([0.1, 0.1, 0.1, 0.9, 0.9, 0.9])
        mask, size, mag = extract_jump_set(u, grid, 0.01)
        np.testing.assert_array_equal(mask, [0, 0, 1, 0, 0, 0])
        assert size[2] == pytest.approx(0.8)
        assert mag[2] == pytest.approx(0.4)

    def test_tie_takes_first_axis(self):
        diffs = np.array([[-0.5], [0.5]])
        assert max_axis_difference(diffs)[0] == -0.5

    def test_forward_differences_last_index(self):
        d = forward_differences(np.arange(12.0).reshape(3, 4))
        np.testing.assert_array_equal(d[0][-1], 0)
        np.testing.assert_array_equal(d[1][:, -1], 0)
        assert d[0][0, 0] == 4 and d[1][0, 0] == 1

    def test_circle_traced(self):
        sc = Scenario(dim=2, cohens_d=0.75, sigma=0.0)
        assert sc.alpha == pytest.approx(0.1126, abs=1e-4)
        grid = grid_of((40, 40), 32, (0.0, 1.2))
        truth = rasterize_truth(sc, grid)
        mask, size, _ = extract_jump_set(truth.surface, grid, 0.005)
        centers = grid.cell_centers().reshape(40, 40, 2)
        r = np.linalg.norm(centers[mask] - 0.5, axis=1)
        assert mask.sum() > 0 and np.all(np.abs(r - 0.25) <= 1.5 / 40)
        assert np.all(truth.jump_mask[mask])

    def test_shape_mismatch(self):
        with pytest.raises(GridMismatch):
            extract_jump_set(np.zeros(4), grid_of((5,), 4), 0.1)

    def test_estimate_from_field(self):
        grid = grid_of((6,), 16)
        est = estimate_from_field(subgraph([0.2] * 3 + [0.8] * 3, 16), grid, 0.01)
        assert est.jump_mask.sum() == 1 and est.jump_size[2] == pytest.approx(9 / 16)


def _truth():
    surface = np.array([0.1, 0.1, 0.5, 0.5, 0.5, 0.2])
    mask = np.array([0, 1, 0, 0, 1, 0], dtype=bool)
    size = np.array([0, 0.4, 0, 0, -0.3, 0])
    return Truth(surface, mask, size)


class TestMetrics:
    def test_perfect(self):
        t = _truth()
        m = compute_metrics(FdrEstimate(t.surface, t.jump_mask, t.jump_size, np.zeros(6)), t)
        assert m.mse_u == 0 and m.mse_tau == 0 and m.bias_tau == 0
        assert m.fnr == 0 and m.fpr == 0
        assert m.alpha_hat == pytest.approx(0.35)

    def test_constant_shift(self):
        t = _truth()
        off = ~t.jump_mask
        est = FdrEstimate(t.surface + 0.1 * off, t.jump_mask, t.jump_size, np.zeros(6))
        m = compute_metrics(est, t)
        assert m.mse_u == pytest.approx(0.01 * off.mean())
        assert m.fnr == 0 and m.fpr == 0
        shifted = compute_metrics(FdrEstimate(t.surface + 0.1, t.jump_mask, t.jump_size, np.zeros(6)), t)
        assert shifted.mse_u == pytest.approx(0.01)
        assert (shifted.fnr, shifted.fpr) == (0, 0)

    def test_rates(self):
        t = _truth()
        found = np.array([1, 1, 0, 0, 0, 0], dtype=bool)
        est = FdrEstimate(t.surface, found, np.where(found, 0.5, 0.0), np.zeros(6))
        m = compute_metrics(est, t)
        assert m.fnr == pytest.approx(0.5)
        assert m.fpr == pytest.approx(0.25)
        assert m.alpha_hat == pytest.approx(0.5)
        assert m.bias_tau == pytest.approx(0.1)
        assert m.mse_tau == pytest.approx(0.01)

    def test_nothing_detected(self):
        t = _truth()
        m = compute_metrics(FdrEstimate(t.surface, np.zeros(6, bool), np.zeros(6), np.zeros(6)), t)
        assert m.fnr == 1 and m.alpha_hat == 0
        assert m.bias_tau == pytest.approx(-0.35)

    def test_as_dict(self):
        t = _truth()
        d = compute_metrics(FdrEstimate(t.surface, t.jump_mask, t.jump_size, np.zeros(6)), t).as_dict()
        assert set(d) == {"mse_u", "mse_tau", "bias_tau", "alpha_hat", "fnr", "fpr"}

    def test_grid_mismatch(self):
        with pytest.raises(GridMismatch):
            compute_metrics(FdrEstimate(np.zeros(3), np.zeros(3, bool), np.zeros(3), np.zeros(3)), _truth())
