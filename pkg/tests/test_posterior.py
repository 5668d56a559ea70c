import numpy as np
import pytest
from scipy import stats

from kbsysid.errors import DegenerateError, SizeError
from kbsysid.kernel import Hyperparameters, derivator, kernel_matrix
from kbsysid.model import build_regressor, convolve
from kbsysid.posterior import estimate_noise_variance, log_marginal_likelihood, posterior_moments


def random_problem(rng, N=None, n=None):
    n = n or int(rng.integers(2, 31))
    N = N or int(rng.integers(n, 61))
    U = build_regressor(rng.standard_normal(N), rng.standard_normal(n - 1), n)
    y = rng.standard_normal(N)
    hp = Hyperparameters(float(rng.uniform(0.1, 3)), float(rng.uniform(0.3, 0.95)), float(rng.uniform(0.05, 2)))
    return y, U, hp


def dual_form_mean(y, U, hp):
    PK = hp.lam * kernel_matrix(hp.beta, U.shape[1])
    Sy = U @ PK @ U.T + hp.sigma2 * np.eye(U.shape[0])
    return PK @ U.T @ np.linalg.solve(Sy, y), PK - PK @ U.T @ np.linalg.solve(Sy, U @ PK)


class TestPosteriorMoments:
    def test_zero_data(self, rng):
        y, U, hp = random_problem(rng, 20, 6)
        p0 = posterior_moments(np.zeros_like(y), U, hp)
        p1 = posterior_moments(y, U, hp)
        assert not p0.g_hat.any()
        np.testing.assert_allclose(p0.cov, p1.cov, rtol=1e-14)

    def test_dual_form(self, rng):
        for _ in range(50):
            y, U, hp = random_problem(rng)
            p = posterior_moments(y, U.entries, hp)
            g_dual, cov_dual = dual_form_mean(y, U.entries, hp)
            assert np.linalg.norm(p.g_hat - g_dual) <= 1e-8 * np.linalg.norm(g_dual)
            assert np.linalg.norm(p.cov - cov_dual) <= 1e-8 * np.linalg.norm(cov_dual)

    def test_shrinks_with_noise(self, rng):
        y, U, hp = random_problem(rng, 40, 10)
        norms = [np.linalg.norm(posterior_moments(y, U, Hyperparameters(hp.lam, hp.beta, s2)).g_hat)
                 for s2 in (1e2, 1e4, 1e6)]
        assert norms[0] > norms[1] > norms[2]

    def test_stored_fields_consistent(self, rng):
        y, U, hp = random_problem(rng, 30, 8)
        p = posterior_moments(y, U, hp)
        assert np.max(np.abs(p.cov - p.cov.T)) < 1e-12
        np.testing.assert_allclose(p.s_moment, p.cov + np.outer(p.g_hat, p.g_hat), rtol=0, atol=0)
        D = derivator(8)
        np.testing.assert_allclose(p.d_diag, np.maximum(np.diag(D @ p.s_moment @ D.T), 0),
                                   rtol=1e-12, atol=1e-14 * np.abs(p.s_moment).max())
        assert np.all(p.d_diag >= 0)
        assert np.linalg.eigvalsh(p.cov).min() > 0

    def test_requires_positive_scale(self, rng):
        y, U, _ = random_problem(rng, 10, 3)
        with pytest.raises(ValueError):
            posterior_moments(y, U, Hyperparameters(0.0, 0.5, 1.0))


class TestLogMarginalLikelihood:
    def test_prior_collapse(self):
        U = np.array([[0.7, -1.2]])
        val = log_marginal_likelihood([0.4], U, Hyperparameters(0.0, 0.5, 0.3))
        assert val == pytest.approx(stats.norm(0, np.sqrt(0.3)).logpdf(0.4), rel=1e-14)

    def test_dense_gaussian_oracle(self, rng):
        for _ in range(20):
            y, U, hp = random_problem(rng, 5, 3)
            Sy = hp.lam * U.entries @ kernel_matrix(hp.beta, 3) @ U.entries.T + hp.sigma2 * np.eye(5)
            expected = stats.multivariate_normal(np.zeros(5), Sy).logpdf(y)
            assert abs(log_marginal_likelihood(y, U, hp) - expected) < 1e-10

    def test_row_permutation_invariance(self, rng):
        y, U, hp = random_problem(rng, 25, 7)
        perm = rng.permutation(25)
        a = log_marginal_likelihood(y, U.entries, hp)
        b = log_marginal_likelihood(y[perm], U.entries[perm], hp)
        assert a == pytest.approx(b, rel=1e-12)

    def test_scaled_data_less_likely(self, rng):
        for _ in range(10):
            y, U, hp = random_problem(rng)
            assert log_marginal_likelihood(10 * y, U, hp) < log_marginal_likelihood(y, U, hp)


class TestNoiseVariance:
    def test_noiseless(self, rng):
        n, N = 8, 60
        u = rng.standard_normal(N + n - 1)
        y = convolve(rng.standard_normal(n), u)
        assert estimate_noise_variance(y, u[n - 1:], n) < 1e-16 * np.var(y)

    def test_zero_input_rejected(self, rng):
        with pytest.raises(DegenerateError):
            estimate_noise_variance(rng.standard_normal(50), np.zeros(50), 5)

    def test_too_few_rows(self, rng):
        with pytest.raises(SizeError):
            estimate_noise_variance(np.ones(19), rng.standard_normal(19), 10)

    def test_monte_carlo(self):
        n, N, s2 = 20, 400, 0.3
        est = []
        for seed in range(50):
            r = np.random.default_rng(seed)
            u = r.standard_normal(N + n - 1)
            y = convolve(0.8 ** np.arange(n), u) + np.sqrt(s2) * r.standard_normal(N)
            est.append(estimate_noise_variance(y, u[n - 1:], n))
        est = np.array(est)
        assert np.all(np.abs(est / s2 - 1) < 0.2)
        assert abs(np.median(est) / s2 - 1) < 0.1
