import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kbsysid.errors import SizeError, UndefinedScoreError
from kbsysid.model import Dataset, build_regressor, convolve, fit_score, ic_regressor

from conftest import brute_regressor


class TestBuildRegressor:
    def test_small_layout(self):
        R = build_regressor([1, 2, 3], [5], 2)
        np.testing.assert_array_equal(R.entries, [[1, 5], [2, 1], [3, 2]])
        expected_ic = np.zeros((3, 2))
        expected_ic[0, 1] = 5
        np.testing.assert_array_equal(R.ic_part, expected_ic)

    def test_row_zero_reads_u_minus_backwards(self):
        a, b = 7.0, -3.0
        R = build_regressor([1, 0, 0, 0], [a, b], 3)
        np.testing.assert_array_equal(R.entries[0], [1, b, a])

    def test_zero_initial_conditions(self, rng):
        R = build_regressor(rng.standard_normal(10), np.zeros(4), 5)
        assert not R.ic_part.any()
        np.testing.assert_array_equal(R.entries, R.known_part)

    def test_split_and_support(self, rng):
        n, N = 6, 11
        R = build_regressor(rng.standard_normal(N), rng.standard_normal(n - 1), n)
        np.testing.assert_array_equal(R.entries, R.known_part + R.ic_part)
        t, k = np.nonzero(R.ic_part)
        assert np.all(t - k < 0)

    def test_matches_brute_force(self, rng):
        n, N = 7, 12
        up, um = rng.standard_normal(N), rng.standard_normal(n - 1)
        np.testing.assert_array_equal(build_regressor(up, um, n).entries, brute_regressor(up, um, n))

    @pytest.mark.parametrize("N,n,m", [(3, 4, 3), (5, 3, 3), (5, 3, 1)])
    def test_size_errors(self, N, n, m):
        with pytest.raises(SizeError):
            build_regressor(np.ones(N), np.ones(m), n)


class TestIcRegressor:
    def test_small_example(self):
        G = ic_regressor([1, 2, 3], 2)
        np.testing.assert_array_equal(G, [[3, 2], [0, 3]])

    def test_zero_response(self):
        assert not ic_regressor(np.zeros(5), 8).any()

    def test_rows_after_transient_vanish(self, rng):
        n, N = 6, 15
        G = ic_regressor(rng.standard_normal(n), N)
        assert not G[n - 1:].any()

    def test_consistency_with_ic_part(self, rng):
        for _ in range(100):
            n = int(rng.integers(2, 9))
            N = int(rng.integers(n, 20))
            g = rng.standard_normal(n)
            um = rng.standard_normal(n - 1)
            R = build_regressor(rng.standard_normal(N), um, n)
            np.testing.assert_allclose(ic_regressor(g, N) @ um, R.ic_part @ g, rtol=0, atol=1e-12)


class TestConvolve:
    def test_identity_system(self, rng):
        up = rng.standard_normal(9)
        g = np.zeros(4)
        g[0] = 1
        np.testing.assert_array_equal(convolve(g, np.concatenate([rng.standard_normal(3), up])), up)

    def test_hand_example(self):
        np.testing.assert_array_equal(convolve([1, 1], [4, 1, 2]), [5, 3])

    def test_linearity(self, rng):
        g = rng.standard_normal(5)
        u1, u2 = rng.standard_normal(14), rng.standard_normal(14)
        np.testing.assert_allclose(convolve(g, u1 + u2), convolve(g, u1) + convolve(g, u2), atol=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(n=st.integers(2, 8), extra=st.integers(0, 10), seed=st.integers(0, 2**32 - 1))
    def test_regressor_product_is_convolution(self, n, extra, seed):
        r = np.random.default_rng(seed)
        N = n + extra
        g, up, um = r.standard_normal(n), r.standard_normal(N), r.standard_normal(n - 1)
        lhs = build_regressor(up, um, n).entries @ g
        np.testing.assert_allclose(lhs, convolve(g, np.concatenate([um, up])), rtol=0, atol=1e-12)


class TestFitScore:
    def test_perfect(self, rng):
        g = rng.standard_normal(10)
        assert fit_score(g, g) == 100.0

    def test_mean_predictor(self, rng):
        g = rng.standard_normal(10)
        assert fit_score(g, np.full_like(g, g.mean())) == 0.0

    def test_hand_example(self):
        assert fit_score([1, -1], [0, 0]) == 0.0

    def test_constant_truth_rejected(self):
        with pytest.raises(UndefinedScoreError):
            fit_score([2, 2, 2], [1, 2, 3])


class TestDataset:
    def test_requires_N_at_least_n(self):
        with pytest.raises(SizeError):
            Dataset(np.ones(3), np.ones(3), n=4)

    def test_degenerate_N_equals_n(self):
        assert Dataset(np.ones(4), np.ones(4), n=4).N == 4

    def test_u_minus_length_checked(self):
        with pytest.raises(SizeError):
            Dataset(np.ones(5), np.ones(5), n=3, u_minus_true=np.ones(3))
