import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rmt_select import detequiv as de
from rmt_select.core import CorrelationMatrix, ErrorMetric, ProblemDims, SelectionVector
from rmt_select.gradients import grad_lce_bar, grad_mse_bar, grad_wev_bar, gradient

from conftest import random_correlation

H_STEP = 1e-6


def _edge(R, s, dims):
    return de.solve_eta(R, s, dims).value


def _mse(R, s, dims):
    return de.solve_delta(R, s, dims).value


def _lce(R, s, dims):
    return de.lce_bar(R, s, dims).value


def central_difference(f, R, s, dims, h=H_STEP):
    s = np.asarray(s, dtype=float)
    out = np.empty(s.size)
    for i in range(s.size):
        e = np.zeros(s.size)
        e[i] = h
        if s[i] >= h:
            out[i] = (f(R, s + e, dims) - f(R, s - e, dims)) / (2 * h)
        else:
            # second-order forward stencil at the s_i = 0 boundary
            out[i] = (-3 * f(R, s, dims) + 4 * f(R, s + e, dims) - f(R, s + 2 * e, dims)) / (2 * h)
    return out


def _rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


@pytest.fixture(scope="module")
def relaxed_points():
    dims = ProblemDims(40, 12, 20)
    pts = []
    for seed in range(4):
        R = random_correlation(40, 100 + seed)
        s = np.random.default_rng(seed).uniform(0.1, 0.9, 40)
        pts.append((R, s))
    return dims, pts


class TestIdentityClosedForms:
    dims = ProblemDims(100, 30, 50)
    R = CorrelationMatrix(np.eye(100))
    s = SelectionVector.from_indices(100, range(50))

    def test_mse(self):
        g = grad_mse_bar(self.R, self.s, self.dims)
        assert g.scalar == pytest.approx(1.5)
        np.testing.assert_allclose(g.values[:50], -0.03, rtol=1e-12)
        np.testing.assert_allclose(g.values[50:], -0.1875, rtol=1e-12)

    def test_lce(self):
        g = grad_lce_bar(self.R, self.s, self.dims)
        delta, m, c = 1.5, 30, 100 / 30
        trace_q = 50 + 50 / (1 + delta)
        assert trace_q == pytest.approx(70.0)
        for block, dprime, qii in ((slice(0, 50), -0.03, 1 / (1 + delta)), (slice(50, 100), -0.1875, 1.0)):
            expected = (1 - c) * dprime / delta + dprime * trace_q / (m * delta) - (delta / m) * qii
            np.testing.assert_allclose(g.values[block], expected, rtol=1e-12)

    def test_wev_symmetry(self):
        g = grad_wev_bar(self.R, self.s, self.dims)
        np.testing.assert_allclose(g.values[:50], g.values[0], rtol=1e-12)
        np.testing.assert_allclose(g.values[50:], g.values[50], rtol=1e-12)
        assert g.values[50] > g.values[0] > 0
        fd = central_difference(_edge, self.R, self.s.values, self.dims)
        np.testing.assert_allclose(g.values[[0, 50]], fd[[0, 50]], rtol=1e-5)


class TestFiniteDifference:
    def test_mse(self, relaxed_points):
        dims, pts = relaxed_points
        for R, s in pts:
            assert _rel(grad_mse_bar(R, s, dims).values, central_difference(_mse, R, s, dims)) <= 1e-5

    def test_lce(self, relaxed_points):
        dims, pts = relaxed_points
        for R, s in pts:
            assert _rel(grad_lce_bar(R, s, dims).values, central_difference(_lce, R, s, dims)) <= 1e-5

    def test_edge(self, relaxed_points):
        dims, pts = relaxed_points
        for R, s in pts:
            assert _rel(grad_wev_bar(R, s, dims).values, central_difference(_edge, R, s, dims)) <= 1e-4

    def test_reciprocal(self, relaxed_points):
        dims, pts = relaxed_points
        R, s = pts[0]
        f = lambda R, s, d: de.wev_bar(R, s, d).value  # noqa: E731
        g = grad_wev_bar(R, s, dims, reciprocal=True)
        assert g.target == "reciprocal"
        assert _rel(g.values, central_difference(f, R, s, dims)) <= 1e-4

    def test_binary_boundary(self):
        R = random_correlation(30, 9)
        dims = ProblemDims(30, 8, 15)
        s = SelectionVector.from_indices(30, range(0, 30, 2)).values
        assert _rel(grad_mse_bar(R, s, dims).values, central_difference(_mse, R, s, dims)) <= 1e-5


class TestIdentities:
    def test_chain_rule(self, relaxed_points):
        dims, pts = relaxed_points
        for R, s in pts:
            edge = grad_wev_bar(R, s, dims)
            rec = grad_wev_bar(R, s, dims, reciprocal=True)
            np.testing.assert_allclose(rec.values, -edge.values / edge.objective**2, rtol=1e-10)
            assert rec.objective == pytest.approx(1 / edge.objective, rel=1e-12)

    @pytest.mark.parametrize("alpha", [0.25, 3.0])
    def test_lce_gradient_scale_invariant(self, alpha, relaxed_points):
        # R -> alpha R shifts the LCE equivalent by -log(alpha), leaving its gradient unchanged
        dims, pts = relaxed_points
        R, s = pts[1]
        np.testing.assert_allclose(
            grad_lce_bar(R.scaled(alpha), s, dims).values, grad_lce_bar(R, s, dims).values, rtol=1e-8, atol=1e-12
        )
        assert _lce(R.scaled(alpha), s, dims) == pytest.approx(_lce(R, s, dims) - np.log(alpha), abs=1e-10)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 10**6))
    def test_mse_gradient_strictly_negative(self, seed):
        R = random_correlation(25, seed)
        dims = ProblemDims(25, 6, 12)
        s = np.random.default_rng(seed).uniform(0.05, 1.0, 25)
        assert np.all(grad_mse_bar(R, s, dims).values < 0)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 10**6), st.sampled_from(list(ErrorMetric)))
    def test_permutation_equivariance(self, seed, metric):
        rng = np.random.default_rng(seed)
        R = random_correlation(20, seed)
        dims = ProblemDims(20, 5, 10)
        s = rng.uniform(0.1, 0.9, 20)
        perm = rng.permutation(20)
        g = gradient(metric, R, s, dims).values
        gp = gradient(metric, R.permuted(perm), s[perm], dims).values
        np.testing.assert_allclose(gp, g[perm], rtol=1e-8, atol=1e-12)

    def test_symmetric_instance_gives_symmetric_gradient(self):
        # R and s are both invariant under reversing the index order
        i = np.arange(12)
        R = CorrelationMatrix(0.4 ** np.abs(i[:, None] - i[None, :]))
        s = np.array([0.9, 0.2, 0.7, 0.5, 0.3, 0.6, 0.6, 0.3, 0.5, 0.7, 0.2, 0.9])
        dims = ProblemDims(12, 3, 6)
        for metric in ErrorMetric:
            g = gradient(metric, R, s, dims).values
            np.testing.assert_allclose(g, g[::-1], rtol=1e-9, atol=1e-13)
