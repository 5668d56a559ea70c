import json

import numpy as np
import pytest
from scipy import signal

from kbsysid.arma import ArmaModel, condition_initial, input_covariance, simulate


def brute_condition(cov, m, u_plus):
    """Conditional law from the joint precision matrix."""
    P = np.linalg.inv(cov)
    cov_c = np.linalg.inv(P[:m, :m])
    return -cov_c @ P[:m, m:] @ u_plus, cov_c


def random_stable_arma(rng, p):
    poles = rng.uniform(0.2, 0.9, p) * np.sign(rng.standard_normal(p))
    return ArmaModel(d=np.poly(poles)[1:], c=np.concatenate([[rng.uniform(0.5, 2)], rng.standard_normal(p)]))


class TestModel:
    def test_unstable_rejected(self):
        with pytest.raises(ValueError):
            ArmaModel(d=[-1.1], c=[1.0])

    def test_zero_c0_rejected(self):
        with pytest.raises(ValueError):
            ArmaModel(d=[], c=[0.0, 1.0])

    def test_json_round_trip(self):
        m = ArmaModel(d=[-0.5, 0.06], c=[1.0, 0.3])
        obj = json.loads(m.to_json())
        assert set(obj) == {"d", "c"}
        back = ArmaModel.from_json(m.to_json())
        np.testing.assert_array_equal(back.d, m.d)
        np.testing.assert_array_equal(back.c, m.c)


class TestSimulate:
    def test_white_noise_variance(self):
        u = simulate(ArmaModel(d=[], c=[1.0]), 100_000, 0, seed=1)
        assert abs(u.var() - 1) < 0.05

    def test_ar1_autocorrelation(self):
        a = 0.9
        u = simulate(ArmaModel(d=[-a], c=[1.0]), 100_000, 1000, seed=2)
        u = u - u.mean()
        rho = (u[1:] @ u[:-1]) / (u @ u)
        assert abs(rho - a) < 0.02

    def test_determinism(self):
        m = ArmaModel(d=[-0.5], c=[1.0, 0.4])
        np.testing.assert_array_equal(simulate(m, 50, 10, seed=3), simulate(m, 50, 10, seed=3))
        assert not np.array_equal(simulate(m, 50, 10, seed=3), simulate(m, 50, 10, seed=4))

    def test_negative_burn_in(self):
        with pytest.raises(ValueError):
            simulate(ArmaModel(), 10, -1)


class TestInputCovariance:
    @pytest.mark.parametrize("mode", ["transient", "stationary"])
    def test_white_noise(self, mode):
        np.testing.assert_allclose(input_covariance(ArmaModel(c=[1.7]), 6, mode), 1.7**2 * np.eye(6), atol=1e-14)

    def test_ar1_stationary(self):
        a = 0.8
        cov = input_covariance(ArmaModel(d=[-a], c=[1.0]), 8, "stationary")
        r0 = 1 / (1 - a**2)
        np.testing.assert_allclose(cov[0], r0 * a ** np.arange(8), rtol=1e-10)

    def test_ar1_transient_first_entry(self):
        cov = input_covariance(ArmaModel(d=[-0.8], c=[1.3]), 5, "transient")
        assert cov[0, 0] == pytest.approx(1.3**2)
        # u_1 = 0.8 u_0 + 1.3 e_1
        assert cov[1, 1] == pytest.approx(1.3**2 * (1 + 0.64))

    def test_transient_matches_recursion(self, rng):
        m = random_stable_arma(rng, 3)
        size = 7
        # columns: response of u_0..u_{size-1} to each e_t, process at rest before t = 0
        H = np.column_stack([signal.lfilter(m.c, m.ar_poly, np.eye(size)[k]) for k in range(size)])
        np.testing.assert_allclose(input_covariance(m, size, "transient"), H @ H.T, atol=1e-12)

    @pytest.mark.parametrize("mode", ["transient", "stationary"])
    def test_psd(self, mode, rng):
        for p in (1, 2, 4, 8):
            cov = input_covariance(random_stable_arma(rng, p), 500 if p == 8 else 120, mode)
            cov = 0.5 * (cov + cov.T)
            assert np.linalg.eigvalsh(cov).min() >= -1e-10 * np.abs(cov).max()

    def test_stationary_monte_carlo(self):
        m = ArmaModel(d=[-1.2, 0.5], c=[1.0, 0.3])
        size, runs = 8, 20_000
        e = np.random.default_rng(5).standard_normal((runs, 300 + size))
        u = signal.lfilter(m.c, m.ar_poly, e, axis=1)[:, 300:]
        emp = u.T @ u / runs
        cov = input_covariance(m, size, "stationary")
        assert np.linalg.norm(emp - cov) / np.linalg.norm(cov) < 0.05


class TestConditionInitial:
    @pytest.mark.parametrize("mode", ["transient", "stationary"])
    def test_white_noise_independence(self, mode, rng):
        c = condition_initial(rng.standard_normal(9), ArmaModel(c=[2.0]), 4, mode)
        np.testing.assert_allclose(c.mean, 0, atol=1e-14)
        np.testing.assert_allclose(c.cov, 4 * np.eye(3), atol=1e-13)

    def test_ar1_single_sample(self, rng):
        a = 0.7
        m = ArmaModel(d=[-a], c=[1.0])
        u = rng.standard_normal(5)
        c = condition_initial(u, m, 2)
        # reversed-time AR(1): the best backward predictor of u_{-1} is a u_0
        assert c.mean[0] == pytest.approx(a * u[0], rel=1e-10)
        cov = input_covariance(m, 6)
        mean_b, cov_b = brute_condition(cov, 1, u)
        np.testing.assert_allclose(c.mean, mean_b, atol=1e-10)
        np.testing.assert_allclose(c.cov, cov_b, atol=1e-10)

    @pytest.mark.parametrize("mode", ["transient", "stationary"])
    def test_matches_dense_conditioning(self, mode, rng):
        for _ in range(50):
            m = random_stable_arma(rng, int(rng.integers(1, 4)))
            n = int(rng.integers(2, 6))
            N = int(rng.integers(n, 11))
            u = rng.standard_normal(N)
            c = condition_initial(u, m, n, mode)
            mean_b, cov_b = brute_condition(input_covariance(m, n - 1 + N, mode), n - 1, u)
            np.testing.assert_allclose(c.mean, mean_b, atol=1e-8)
            np.testing.assert_allclose(c.cov, cov_b, atol=1e-8)

    def test_covariance_independent_of_data(self, rng):
        m = ArmaModel(d=[-0.5, 0.1], c=[1.0, 0.2])
        a = condition_initial(rng.standard_normal(12), m, 5)
        b = condition_initial(rng.standard_normal(12), m, 5)
        np.testing.assert_array_equal(a.cov, b.cov)

    def test_total_covariance(self, rng):
        m = random_stable_arma(rng, 3)
        n, N = 5, 10
        cov = input_covariance(m, n - 1 + N)
        c = condition_initial(rng.standard_normal(N), m, n)
        explained = cov[: n - 1, n - 1:] @ np.linalg.solve(cov[n - 1:, n - 1:], cov[n - 1:, : n - 1])
        assert np.max(np.abs(cov[: n - 1, : n - 1] - (c.cov + explained))) < 1e-8
