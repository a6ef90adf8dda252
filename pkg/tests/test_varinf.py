import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sdobs.linops import HaarTransform, MRIOperator, MatrixOperator, SamplingMask, make_design
from sdobs.onedim import STUDIES, OneDimProblem, fit_gamma_1d
from sdobs.priors import GAMMA_FLOOR
from sdobs.varinf import (InnerLoopConfig, SingularSystemError, diag_of_inverse_dense,
                          diag_of_inverse_sparse, double_loop, inner_loop_map, inner_objective,
                          marginal_variances, threshold_scaled, transformed_gram, update_gamma)


def _small_problem(seed, n=8, levels=2):
    rng = np.random.default_rng(seed)
    flags = rng.random(n) < 0.5
    flags[n // 2] = True
    H = MRIOperator(SamplingMask(flags), n)
    B = HaarTransform(n, levels)
    return rng, H, B


class TestMarginalVariances:
    def test_zero_operator_gives_gamma(self):
        H = MatrixOperator(np.zeros((6, 4)))
        B = MatrixOperator(np.eye(4))
        gamma = np.array([0.5, 2.0, 7.0, 1e-3])
        np.testing.assert_allclose(marginal_variances(gamma, H, B, 0.3), gamma, rtol=1e-14)

    def test_dense_3x3_oracle(self):
        C = np.array([[2.0, 0.5, 0.0], [0.5, 4.0, 0.1], [0.0, 0.1, 5.0]])
        np.testing.assert_allclose(diag_of_inverse_dense(C), np.diag(np.linalg.inv(C)), atol=1e-12)
        # the same matrix reached through the public entry point: gamma = 1, sigma = 1
        gram = C - np.eye(3)
        I3 = MatrixOperator(np.eye(3))
        z = marginal_variances(np.ones(3), I3, I3, 1.0, method="dense", gram=gram)
        np.testing.assert_allclose(z, np.diag(np.linalg.inv(C)), atol=1e-12)

    def test_sparse_threshold_zero_matches_dense(self):
        rng, H, B = _small_problem(0)
        gamma = np.exp(rng.uniform(-3, 2, B.range_dim))
        dense = marginal_variances(gamma, H, B, 0.2, method="dense")
        sparse = marginal_variances(gamma, H, B, 0.2, method="sparse", threshold=0.0)
        np.testing.assert_allclose(sparse, dense, rtol=1e-10, atol=0)
        gram = transformed_gram(H, B)
        sparse_g = marginal_variances(gamma, H, B, 0.2, method="sparse", threshold=0.0, gram=gram)
        np.testing.assert_allclose(sparse_g, dense, rtol=1e-10, atol=0)

    def test_sparse_threshold_approximation(self):
        rng, H, B = _small_problem(1)
        gamma = np.exp(rng.uniform(-3, 2, B.range_dim))
        dense = marginal_variances(gamma, H, B, 0.2, method="dense")
        approx = marginal_variances(gamma, H, B, 0.2, method="sparse", threshold=0.01)
        assert np.all(approx > 0)
        assert np.max(np.abs(approx - dense) / dense) < 0.5

    def test_threshold_keeps_diagonal(self):
        C = np.array([[1.0, 1e-4, 0.5], [1e-4, 2.0, 0.0], [0.5, 0.0, 3.0]])
        S = threshold_scaled(C, 0.01).toarray()
        np.testing.assert_array_equal(np.diag(S), np.diag(C))
        assert S[0, 1] == 0.0 and S[0, 2] == 0.5

    def test_singular_signalled(self):
        with pytest.raises(SingularSystemError):
            diag_of_inverse_dense(np.array([[1.0, 2.0], [2.0, 1.0]]))
        with pytest.raises(SingularSystemError):
            diag_of_inverse_sparse(np.zeros((3, 3)))

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2 ** 31 - 1), st.floats(0.01, 10.0))
    def test_bounded_by_gamma(self, seed, sigma):
        rng, H, B = _small_problem(seed)
        gamma = np.exp(rng.uniform(-6, 4, B.range_dim))
        z = marginal_variances(gamma, H, B, sigma)
        assert np.all(z > 0)
        assert np.all(z <= gamma * (1 + 1e-10))

    def test_unknown_method(self):
        _, H, B = _small_problem(2)
        with pytest.raises(ValueError):
            marginal_variances(np.ones(64), H, B, 1.0, method="lanczos")


class TestInnerLoop:
    def test_zero_data_zero_solution(self):
        _, H, B = _small_problem(3)
        res = inner_loop_map(np.zeros(H.range_dim), np.ones(64), 1.0, 0.5, H, B, init=np.zeros(64))
        np.testing.assert_array_equal(res.f, 0.0)
        assert res.converged

    @pytest.mark.parametrize("method", ["mm", "gd"])
    def test_ridge_limit(self, method):
        rng = np.random.default_rng(7)
        H = MatrixOperator(rng.standard_normal((10, 16)))
        B = HaarTransform(4, 2)
        g = rng.standard_normal(10)
        # tau / sqrt(Z0) = 1; t^2 / Z0 stays below 1e-4 so the quadratic expansion holds
        Z0, tau, sigma = 1e4, 1e2, 1.0
        z = np.full(16, Z0)
        Hm = H.to_dense()
        ridge = np.linalg.solve(Hm.T @ Hm / sigma ** 2 + (tau / np.sqrt(Z0)) * np.eye(16),
                                Hm.T @ g / sigma ** 2)
        cfg = InnerLoopConfig(grad_tol=1e-10, max_iters=20000, method=method, stall_tol=0.0)
        res = inner_loop_map(g, z, tau, sigma, H, B, init=np.zeros(16), cfg=cfg)
        assert np.linalg.norm(res.f - ridge) <= 1e-4 * np.linalg.norm(ridge)

    @pytest.mark.parametrize("method", ["mm", "gd"])
    def test_monotone_objective(self, method):
        for seed in range(5):
            rng, H, B = _small_problem(10 + seed)
            g = rng.standard_normal(H.range_dim)
            z = np.exp(rng.uniform(-6, 0, 64))
            init = rng.standard_normal(64)
            cfg = InnerLoopConfig(method=method, max_iters=300)
            res = inner_loop_map(g, z, 0.8, 0.3, H, B, init=init, cfg=cfg)
            trace = np.array(res.objective_trace)
            assert np.all(np.diff(trace) <= 1e-12 * np.abs(trace[:-1]))
            assert trace[-1] <= inner_objective(init, g, z, 0.8, 0.3, H, B)

    def test_gradient_tolerance_met(self):
        rng, H, B = _small_problem(4)
        g = rng.standard_normal(H.range_dim)
        res = inner_loop_map(g, np.full(64, 0.01), 1.0, 0.5, H, B)
        assert res.converged

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_non_finite_input(self):
        _, H, B = _small_problem(5)
        g = np.full(H.range_dim, np.inf)
        with pytest.raises(FloatingPointError):
            inner_loop_map(g, np.ones(64), 1.0, 1.0, H, B)
        with pytest.raises(ValueError):
            inner_loop_map(np.zeros(H.range_dim), -np.ones(64), 1.0, 1.0, H, B)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            InnerLoopConfig(grad_tol=0.0)
        with pytest.raises(ValueError):
            InnerLoopConfig(method="newton")


class TestDoubleLoop:
    def test_update_formula(self):
        assert update_gamma(0.75, 1.0, 2.0) == pytest.approx(0.5 * np.sqrt(1.75))
        assert update_gamma(0.75, 1.0, 2.0) == pytest.approx(0.6614, abs=1e-4)

    @pytest.mark.parametrize("tau,sigma,y", sorted({c for cs in STUDIES.values() for c in cs}))
    def test_scalar_matches_1d_optimum(self, tau, sigma, y):
        one = MatrixOperator(np.eye(1))
        res = double_loop(np.array([y]), one, one, tau, sigma, k0=200, early_exit=1e-12)
        ref = fit_gamma_1d(OneDimProblem(y, tau, sigma))
        assert res.gamma[0] == pytest.approx(ref, rel=1e-3)

    def test_recorded_state_obeys_update(self):
        rng, H, B = _small_problem(6)
        g = rng.standard_normal(H.range_dim)
        res = double_loop(g, H, B, 1.2, 0.4, k0=5, keep_history=True)
        assert len(res.history) == 5 and len(res.gamma_changes) == 5
        for z, f, gamma in res.history:
            assert np.all(z > 0)
            np.testing.assert_array_equal(gamma, np.maximum(np.sqrt(z + B.apply(f) ** 2) / 1.2, GAMMA_FLOOR))
        np.testing.assert_array_equal(res.gamma, res.history[-1][2])

    def test_deterministic(self):
        rng, H, B = _small_problem(7)
        g = rng.standard_normal(H.range_dim)
        a = double_loop(g, H, B, 2.0, 0.3, k0=4)
        b = double_loop(g, H, B, 2.0, 0.3, k0=4)
        np.testing.assert_array_equal(a.gamma, b.gamma)

    def test_early_exit(self):
        rng, H, B = _small_problem(8)
        g = rng.standard_normal(H.range_dim)
        res = double_loop(g, H, B, 2.0, 0.3, k0=100, early_exit=1e-4)
        assert len(res.gamma_changes) < 100
        assert res.gamma_changes[-1] < 1e-4

    def test_invalid(self):
        _, H, B = _small_problem(9)
        with pytest.raises(ValueError):
            double_loop(np.zeros(H.range_dim), H, B, 0.0, 1.0)

    def test_desk_scale_convergence(self):
        from sdobs.harness.phantoms import generate_sparse_phantom
        n = 32
        H = MRIOperator(make_design("UH", n), n)
        B = HaarTransform(n, 4)
        rng = np.random.default_rng(0)
        sigma = 0.006
        g = H.apply(generate_sparse_phantom(n, 1)) + sigma * rng.standard_normal(H.range_dim)
        res = double_loop(g, H, B, 4.0, sigma, k0=16)
        assert res.gamma_changes[-1] < 1e-3
        assert res.gamma_changes[-1] < res.gamma_changes[0]
