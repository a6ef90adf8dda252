import csv

import numpy as np
import pytest
from scipy import integrate
from scipy.stats import norm

from sdobs.onedim import (STUDIES, ApproxPosterior, OneDimProblem, TruePosterior,
                          approx_posterior_pdf, closed_form_normalizer, fit_gamma_1d,
                          gamma_objective, gamma_objective_slope, kl_divergence_1d, run_onedim_study,
                          true_posterior_pdf, write_study)

ALL_CASES = sorted({c for cases in STUDIES.values() for c in cases})


def _grid_argmax(prob, lo=1e-6, hi=1e6, points=100_000, refine=3):
    """Brute-force maximizer: log-spaced grid, then repeated finer grids around the best point."""
    grid = np.geomspace(lo, hi, points)
    for _ in range(refine + 1):
        vals = gamma_objective(grid, prob)
        i = int(np.argmax(vals))
        a, b = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
        best = grid[i]
        grid = np.linspace(a, b, 10_001)
    return best


class TestTruePosterior:
    def test_symmetric_at_zero(self):
        prob = OneDimProblem(0.0, 0.7)
        x = np.linspace(0.01, 8, 200)
        np.testing.assert_allclose(true_posterior_pdf(x, prob), true_posterior_pdf(-x, prob), rtol=1e-12)

    @pytest.mark.parametrize("tau,sigma,y", ALL_CASES)
    def test_normalized(self, tau, sigma, y):
        prob = OneDimProblem(y, tau, sigma)
        p = TruePosterior(prob)
        total, _ = integrate.quad(p.pdf, *prob.support, points=[0.0, y], epsabs=1e-13, limit=400)
        assert total == pytest.approx(1.0, abs=1e-8)

    def test_mode_is_soft_threshold(self):
        prob = OneDimProblem(2.0, 0.7, 1.0)
        x = np.linspace(-1, 4, 500_001)
        assert x[np.argmax(true_posterior_pdf(x, prob))] == pytest.approx(1.3, abs=1e-5)
        assert TruePosterior(prob).mode() == pytest.approx(1.3)

    @pytest.mark.parametrize("tau,sigma,y", ALL_CASES + [(0.7, 1.0, -3.0), (5.0, 0.5, 1.0)])
    def test_closed_form_normalizer(self, tau, sigma, y):
        prob = OneDimProblem(y, tau, sigma)
        assert closed_form_normalizer(prob) == pytest.approx(TruePosterior(prob).log_norm, abs=1e-9)

    def test_invalid(self):
        with pytest.raises(ValueError):
            OneDimProblem(0.0, -1.0)


class TestApproxPosterior:
    def test_moments(self):
        q = ApproxPosterior(OneDimProblem(2.0, 0.7, 1.0), 1.0)
        assert q.mean == pytest.approx(1.0) and q.var == pytest.approx(0.5)

    def test_large_gamma_limit(self):
        prob = OneDimProblem(2.0, 0.7, 1.3)
        x = np.linspace(-3, 7, 50)
        np.testing.assert_allclose(approx_posterior_pdf(x, prob, 1e12), norm.pdf(x, 2.0, 1.3), rtol=1e-9)

    def test_normalized(self):
        prob = OneDimProblem(4.0, 0.7)
        total, _ = integrate.quad(lambda x: approx_posterior_pdf(x, prob, 2.3), -np.inf, np.inf)
        assert total == pytest.approx(1.0, abs=1e-10)

    def test_invalid_gamma(self):
        with pytest.raises(ValueError):
            ApproxPosterior(OneDimProblem(0.0, 1.0), 0.0)


class TestFitGamma:
    @pytest.mark.parametrize("tau,sigma,y", ALL_CASES)
    def test_grid_oracle(self, tau, sigma, y):
        prob = OneDimProblem(y, tau, sigma)
        assert fit_gamma_1d(prob) == pytest.approx(_grid_argmax(prob), rel=1e-4)

    @pytest.mark.parametrize("tau,sigma,y", ALL_CASES)
    def test_slope_matches_finite_difference(self, tau, sigma, y):
        prob = OneDimProblem(y, tau, sigma)
        for g in (0.05, 0.7, 3.0, 40.0):
            h = 1e-6 * g
            fd = (gamma_objective(g + h, prob) - gamma_objective(g - h, prob)) / (2 * h)
            assert gamma_objective_slope(g, prob) == pytest.approx(fd, rel=1e-6, abs=1e-9)

    @pytest.mark.parametrize("tau", [0.14, 0.7, 1.9, 10.0])
    def test_closed_form_at_zero(self, tau):
        # at y = 0 the stationarity condition is a quadratic in gamma
        s2 = 1.0
        expected = (-s2 + np.sqrt(s2 ** 2 + 4 * s2 / tau ** 2)) / 2
        assert fit_gamma_1d(OneDimProblem(0.0, tau)) == pytest.approx(expected, rel=1e-8)

    def test_large_tau_collapses(self):
        gammas = [fit_gamma_1d(OneDimProblem(0.0, t)) for t in (1.0, 10.0, 100.0)]
        assert gammas[0] > gammas[1] > gammas[2]
        assert gammas[2] < 1e-3

    @pytest.mark.parametrize("tau,sigma,y", ALL_CASES)
    def test_local_maximum(self, tau, sigma, y):
        prob = OneDimProblem(y, tau, sigma)
        g = fit_gamma_1d(prob)
        best = gamma_objective(g, prob)
        assert best >= gamma_objective(g * 1.01, prob)
        assert best >= gamma_objective(g * 0.99, prob)


class TestKL:
    def test_self(self):
        prob = OneDimProblem(2.0, 0.7)
        p = TruePosterior(prob)
        assert abs(kl_divergence_1d(p, p, prob.support)) <= 1e-10

    def test_gaussians(self):
        p = lambda x: norm.pdf(x, 0, 1)
        q = lambda x: norm.pdf(x, 1, 1)
        assert kl_divergence_1d(p, q, (-30, 30)) == pytest.approx(0.5, abs=1e-8)
        assert kl_divergence_1d(norm(0, 1), norm(1, 1), (-30, 30)) == pytest.approx(0.5, abs=1e-10)

    def test_support_violation(self):
        p = lambda x: norm.pdf(x)
        q = lambda x: float(x > 0)
        with pytest.raises(ValueError):
            kl_divergence_1d(p, q, (-1, 1))

    def test_unbiased_study_increasing(self):
        kls = [c.kl for c in run_onedim_study("unbiased")]
        assert all(k >= 0 for k in kls)
        assert kls[0] < kls[1] < kls[2]


class TestStudyOutput:
    def test_curves_and_csv(self, tmp_path):
        cases = run_onedim_study("biased")
        assert [c.y for c in cases] == [0.0, 2.0, 4.0]
        assert all(c.x.size == 1001 and c.p_true.size == 1001 for c in cases)
        path = write_study(tmp_path)
        rows = list(csv.reader(open(path)))
        assert rows[0] == ["case", "param", "gamma_hat", "kl"]
        assert len(rows) == 7
        curves = sorted(p.name for p in tmp_path.glob("curve_*.csv"))
        assert len(curves) == 6
        head = next(csv.reader(open(tmp_path / curves[0])))
        assert head == ["x", "p_true", "p_approx"]

    def test_unknown_study(self):
        with pytest.raises(ValueError):
            run_onedim_study("sideways")
