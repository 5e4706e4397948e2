import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fdr.calculus import axis_scales, divergence_adjoint, grad_forward, operator_norm_sq, pairing
from fdr.errors import ShapeMismatch
from fdr.grid import GridSpec


def grid_of(n_cells, s_levels):
    d = len(n_cells)
    return GridSpec(d, tuple(n_cells), s_levels, ((0.0, 1.0),) * d, (0.0, 1.0))


class TestGradForward:
    def test_lifted_ramp(self):
        g = grad_forward(np.array([1, 2 / 3, 1 / 3, 0]), [4.0])
        np.testing.assert_allclose(g[0], [-4 / 3, -4 / 3, -4 / 3, 0.0], atol=1e-15)

    def test_constant_field(self):
        assert not grad_forward(np.full((3, 4, 5), 0.7), grid_of((3, 4), 5)).any()

    def test_half_space_step(self):
        v = np.zeros((6, 4))
        v[3:] = 1.0
        g = grad_forward(v, grid_of((6,), 4))
        np.testing.assert_array_equal(np.nonzero(g[0])[0], [2, 2, 2, 2])
        np.testing.assert_array_equal(g[0][2], 6.0)
        assert not g[1].any()

    def test_constant_along_axis_has_zero_component(self):
        v = np.random.default_rng(0).normal(size=(4, 1, 5)).repeat(3, axis=1)
        assert not grad_forward(v, [4, 3, 5])[1].any()

    def test_last_index_is_zero(self):
        v = np.random.default_rng(1).normal(size=(3, 4, 5))
        g = grad_forward(v, [3, 4, 5])
        assert not g[0][-1].any() and not g[1][:, -1].any() and not g[2][..., -1].any()

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            grad_forward(np.zeros((3, 4)), grid_of((3,), 5))
        with pytest.raises(ShapeMismatch):
            axis_scales([1.0, 2.0], (3,))


class TestAdjoint:
    @pytest.mark.parametrize("shape", [(7, 6), (3, 3, 4), (3, 4, 2, 5)])
    def test_adjoint_identity(self, shape):
        rng = np.random.default_rng(len(shape))
        scales = np.array(shape, dtype=float)
        for _ in range(100):
            v = rng.normal(size=shape)
            p = rng.normal(size=(len(shape),) + shape)
            lhs = np.sum(grad_forward(v, scales) * p)
            rhs = np.sum(v * divergence_adjoint(p, scales))
            assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))

    def test_zero_dual(self):
        assert not divergence_adjoint(np.zeros((2, 3, 4)), [3, 4]).any()

    def test_constant_dual_boundary_terms(self):
        # length-3 axis, p = 1 on the two interior faces: -N at the start, +N at the end
        np.testing.assert_allclose(divergence_adjoint(np.ones((1, 3)), [3.0]), [-3.0, 0.0, 3.0])

    def test_component_mismatch(self):
        with pytest.raises(ShapeMismatch):
            divergence_adjoint(np.zeros((3, 3, 4)), [3, 4])

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.integers(1, 5), min_size=1, max_size=4), st.integers(0, 2**31 - 1))
    def test_adjoint_property(self, shape, seed):
        shape = tuple(shape)
        rng = np.random.default_rng(seed)
        scales = rng.uniform(0.5, 10, len(shape))
        v = rng.normal(size=shape)
        p = rng.normal(size=(len(shape),) + shape)
        lhs = np.sum(grad_forward(v, scales) * p)
        rhs = np.sum(v * divergence_adjoint(p, scales))
        assert lhs == pytest.approx(rhs, abs=1e-10)


class TestOperatorNorm:
    @pytest.mark.parametrize("n_cells,s", [((8,), 6), ((5, 4), 4), ((3, 4, 3), 5)])
    def test_norm_bound(self, n_cells, s):
        g = grid_of(n_cells, s)
        lam = operator_norm_sq(g.shape, g)
        d = len(n_cells)
        assert 0 < lam <= 4 * (d + 1) * max(max(n_cells), s) ** 2

    def test_one_dimensional_value(self):
        # D^T D on a path of length n scaled by N has top eigenvalue 2N^2(1 + cos(pi/n))
        lam = operator_norm_sq((10,), [10.0], n_iter=2000)
        assert lam == pytest.approx(200 * (1 + np.cos(np.pi / 10)), rel=1e-6)


class TestPairing:
    def test_constant_primal(self):
        p = np.random.default_rng(0).normal(size=(2, 3, 4))
        assert pairing(p, np.full((3, 4), 0.3), [3, 4]) == pytest.approx(0.0, abs=1e-12)

    def test_step_face_count(self):
        v = np.zeros((6, 4))
        v[:3] = 1.0
        p = np.zeros((2, 6, 4))
        p[0, 2] = 1.0
        assert pairing(p, v, grid_of((6,), 4)) == pytest.approx(-6.0 * 4)
        assert pairing(p, v, grid_of((6,), 4), normalized=True) == pytest.approx(-1.0)

    def test_bilinear(self):
        rng = np.random.default_rng(2)
        p, v = rng.normal(size=(2, 3, 4)), rng.normal(size=(3, 4))
        assert pairing(2.5 * p, v, [3, 4]) == pytest.approx(2.5 * pairing(p, v, [3, 4]))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            pairing(np.zeros((2, 3, 3)), np.zeros((3, 4)), [3, 4])
