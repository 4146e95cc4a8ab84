"""Exact 1-D transport: oracle agreement, metric properties, gradients."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from openpop.errors import EmptyDistributionError
from openpop.transport import (
    aligned_w1_grad,
    sample_projections,
    wasserstein_1d,
    wasserstein_1d_grad,
)


def lp_transport_cost(p_values, q_values, p_weights=None, q_weights=None):
    """Brute-force optimal transport as a linear program (test oracle)."""
    p_values = np.asarray(p_values, dtype=float)
    q_values = np.asarray(q_values, dtype=float)
    n, m = p_values.size, q_values.size
    pw = np.full(n, 1.0 / n) if p_weights is None else \
        np.asarray(p_weights, dtype=float) / np.sum(p_weights)
    qw = np.full(m, 1.0 / m) if q_weights is None else \
        np.asarray(q_weights, dtype=float) / np.sum(q_weights)
    cost = np.abs(p_values[:, None] - q_values[None, :]).ravel()
    a_eq = []
    b_eq = []
    for i in range(n):
        row = np.zeros(n * m)
        row[i * m:(i + 1) * m] = 1.0
        a_eq.append(row)
        b_eq.append(pw[i])
    for j in range(m - 1):  # last column constraint is redundant
        row = np.zeros(n * m)
        row[j::m] = 1.0
        a_eq.append(row)
        b_eq.append(qw[j])
    res = linprog(cost, A_eq=np.asarray(a_eq), b_eq=np.asarray(b_eq),
                  bounds=(0, None), method="highs")
    assert res.success
    return float(res.fun)


def random_instance(rng, max_points=8, weighted=True):
    n = rng.integers(1, max_points + 1)
    m = rng.integers(1, max_points + 1)
    p = rng.normal(0, 3, n)
    q = rng.normal(0, 3, m)
    pw = rng.uniform(0.05, 1.0, n) if weighted else None
    qw = rng.uniform(0.05, 1.0, m) if weighted else None
    return p, q, pw, qw


class TestAgainstLpOracle:
    def test_point_masses(self):
        assert wasserstein_1d([0.0], [1.0]) == pytest.approx(1.0)

    def test_identical(self):
        assert wasserstein_1d([1, 2, 3], [1, 2, 3]) == pytest.approx(0.0)

    def test_uniform_shifted_pairs(self):
        # uniform on {0,2} vs uniform on {1,3}
        value = wasserstein_1d([0, 2], [1, 3])
        assert value == pytest.approx(1.0)
        assert value == pytest.approx(lp_transport_cost([0, 2], [1, 3]), abs=1e-9)

    def test_random_instances_match_lp(self):
        rng = np.random.default_rng(20240817)
        for trial in range(120):
            p, q, pw, qw = random_instance(rng, weighted=trial % 2 == 0)
            fast = wasserstein_1d(p, q, pw, qw)
            exact = lp_transport_cost(p, q, pw, qw)
            assert fast == pytest.approx(exact, abs=1e-9), f"trial {trial}"


class TestMetricProperties:
    @given(st.lists(st.floats(-50, 50), min_size=1, max_size=12),
           st.lists(st.floats(-50, 50), min_size=1, max_size=12))
    @settings(max_examples=150, deadline=None)
    def test_symmetric_and_nonnegative(self, p, q):
        forward = wasserstein_1d(p, q)
        backward = wasserstein_1d(q, p)
        assert forward >= 0
        assert forward == pytest.approx(backward, abs=1e-9)

    @given(st.lists(st.floats(-50, 50), min_size=1, max_size=10))
    @settings(max_examples=100, deadline=None)
    def test_self_distance_zero(self, p):
        assert wasserstein_1d(p, p) == pytest.approx(0.0, abs=1e-12)

    @given(st.lists(st.floats(-20, 20), min_size=1, max_size=8),
           st.floats(-10, 10))
    @settings(max_examples=100, deadline=None)
    def test_shift_linearity(self, p, c):
        shifted = [v + c for v in p]
        assert wasserstein_1d(p, shifted) == pytest.approx(abs(c), abs=1e-9)

    def test_triangle_inequality_random_triples(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            p, q, pw, qw = random_instance(rng)
            r = rng.normal(0, 3, rng.integers(1, 9))
            rw = rng.uniform(0.05, 1.0, r.size)
            d_pq = wasserstein_1d(p, q, pw, qw)
            d_pr = wasserstein_1d(p, r, pw, rw)
            d_rq = wasserstein_1d(r, q, rw, qw)
            assert d_pq <= d_pr + d_rq + 1e-9

    def test_empty_distribution_rejected(self):
        with pytest.raises(EmptyDistributionError):
            wasserstein_1d([], [1.0])
        with pytest.raises(EmptyDistributionError):
            wasserstein_1d([1.0], [2.0], [0.0], None)


class TestGradient:
    def test_sign_single_point(self):
        w, grad = wasserstein_1d_grad([1.0], None, np.array([0.0]))
        assert w == pytest.approx(1.0)
        assert grad[0] == pytest.approx(-1.0)

    def test_zero_at_equality(self):
        w, grad = wasserstein_1d_grad([1.0, 2.0], None, np.array([1.0, 2.0]))
        assert w == pytest.approx(0.0)
        assert np.allclose(grad, 0.0)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(7)
        h = 1e-5
        for _ in range(150):
            p, q, pw, _ = random_instance(rng)
            # keep away from ties so the subgradient is the gradient
            q = q + rng.uniform(0.01, 0.02, q.size)
            _, grad = wasserstein_1d_grad(p, pw, q)
            for k in range(q.size):
                up, down = q.copy(), q.copy()
                up[k] += h
                down[k] -= h
                fd = (wasserstein_1d(p, up, pw) - wasserstein_1d(p, down, pw)) / (2 * h)
                assert grad[k] == pytest.approx(fd, abs=1e-4, rel=1e-4)

    def test_aligned_path_equals_general(self):
        rng = np.random.default_rng(3)
        p = rng.normal(size=(9, 4))
        q = rng.normal(size=(9, 4))
        w_cols, grads = aligned_w1_grad(p, q)
        for j in range(4):
            w, grad = wasserstein_1d_grad(p[:, j], None, q[:, j])
            assert w_cols[j] == pytest.approx(w, abs=1e-12)
            assert np.allclose(grads[:, j], grad)


class TestProjections:
    def test_unit_norm(self):
        rng = np.random.default_rng(0)
        omega = sample_projections(50, 7, rng)
        assert omega.shape == (50, 7)
        assert np.all(np.abs(np.linalg.norm(omega, axis=1) - 1.0) < 1e-12)

    def test_deterministic_per_seed(self):
        a = sample_projections(20, 3, np.random.default_rng(42))
        b = sample_projections(20, 3, np.random.default_rng(42))
        assert np.array_equal(a, b)

    def test_mean_direction_near_zero(self):
        omega = sample_projections(10_000, 3, np.random.default_rng(1))
        # each coordinate of a uniform sphere direction has variance 1/3
        sigma = np.sqrt(1.0 / 3.0 / 10_000)
        assert np.all(np.abs(omega.mean(axis=0)) < 3 * sigma + 1e-3)
