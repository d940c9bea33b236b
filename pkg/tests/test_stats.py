import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats as sps

from poissonfmt import stats
from poissonfmt.bounds import CovMatrix, univariate_bound
from poissonfmt.stats import SampleSet, TestFunction

vectors = st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=30)


def test_w1_two_point_example():
    assert stats.wasserstein1_1d([-1.0, 1.0], [0.0, 0.0]) == pytest.approx(1.0)


def test_w1_matches_scipy():
    rng = np.random.default_rng(0)
    a, b = rng.standard_normal(500), rng.exponential(size=500)
    assert stats.wasserstein1_1d(a, b) == pytest.approx(sps.wasserstein_distance(a, b), rel=1e-12)


@given(a=vectors, c=st.floats(-100, 100))
def test_w1_shift_and_identity(a, c):
    a = np.array(a)
    assert stats.wasserstein1_1d(a, a) == 0.0
    assert stats.wasserstein1_1d(a, a + c) == pytest.approx(abs(c), rel=1e-9, abs=1e-9)


@given(data=st.data(), n=st.integers(2, 20))
def test_w1_metric_properties(data, n):
    x = [np.array(data.draw(st.lists(st.floats(-100, 100), min_size=n, max_size=n))) for _ in range(3)]
    ab, bc, ac = (stats.wasserstein1_1d(x[i], x[j]) for i, j in ((0, 1), (1, 2), (0, 2)))
    assert ab == pytest.approx(stats.wasserstein1_1d(x[1], x[0]))
    assert ac <= ab + bc + 1e-9


@given(data=st.data(), n=st.integers(2, 30), r=st.floats(0.1, 3.0))
def test_smooth_functions_bounded_by_w1(data, n, r):
    # |E g(a) - E g(b)| <= M1 W1(a, b) for equal-size empirical laws
    a = np.array(data.draw(st.lists(st.floats(-10, 10), min_size=n, max_size=n)))
    b = np.array(data.draw(st.lists(st.floats(-10, 10), min_size=n, max_size=n)))
    g = TestFunction((r,), "sin")
    gap = abs(g(a[:, None]).mean() - g(b[:, None]).mean())
    assert gap <= g.smoothness.M1 * stats.wasserstein1_1d(a, b) + 1e-9


def test_w1_unequal_sizes_deterministic():
    rng = np.random.default_rng(1)
    a, b = rng.standard_normal(1000), rng.standard_normal(300)
    assert stats.wasserstein1_1d(a, b, seed=3) == stats.wasserstein1_1d(a, b, seed=3)
    w, se = stats.wasserstein1_1d_se(a, b)
    assert w > 0 and se > 0
    with pytest.raises(ValueError):
        stats.wasserstein1_1d([], [1.0])


def test_w1_gaussian_null_is_small():
    a = stats.sample_gaussian(CovMatrix([[1.0]]), 100_000, seed=1).column()
    b = stats.sample_gaussian(CovMatrix([[1.0]]), 100_000, seed=2).column()
    w, se = stats.wasserstein1_1d_se(a, b)
    assert w < 0.02 and se < w


def test_jackknife_se_of_mean():
    x = np.random.default_rng(2).standard_normal(40_000)
    assert stats.jackknife_se(x) == pytest.approx(1 / math.sqrt(x.size), rel=0.4)


def test_smooth_distance_zero_frequency_and_null():
    Sigma = CovMatrix(np.eye(2))
    a = stats.sample_gaussian(Sigma, 50_000, seed=11)
    rows = stats.smooth_test_distance(a, Sigma, [TestFunction((0.0, 0.0), "cos")], seed=12)
    assert rows[0].gap == 0.0
    rows = stats.smooth_test_distance(a, Sigma, seed=12)
    assert len(rows) == 3 * 3 * 2
    assert all(r.gap <= 5 * r.se + 1e-12 for r in rows)


def test_cos_mean_under_gaussian():
    Sigma = CovMatrix(np.array([[1.0, 0.5], [0.5, 2.0]]))
    z = stats.sample_gaussian(Sigma, 200_000, seed=7).data
    u = np.array([0.6, -0.4])
    target = math.exp(-0.5 * u @ Sigma.matrix @ u)
    assert TestFunction(tuple(u), "cos")(z).mean() == pytest.approx(target, abs=0.01)


def test_rank_one_gaussian_lies_on_a_line():
    Sigma = CovMatrix(np.ones((2, 2)))
    z = stats.sample_gaussian(Sigma, 1000, seed=0).data
    np.testing.assert_allclose(z[:, 0], z[:, 1], atol=1e-10)
    with pytest.raises(ValueError):
        stats.sample_gaussian(np.array([[1.0, 2.0], [2.0, 1.0]]), 10, 0)


def test_moment_estimators_poisson_kappa4():
    lam = 4.0
    x = np.random.default_rng(3).poisson(lam, size=400_000).astype(float)
    m = stats.moment_estimators((x - lam) / math.sqrt(lam))
    assert abs(m["kappa4"][0] - 1 / lam) < 4 * m["kappa4_se"][0]
    assert m["fourth_moment"][0] == pytest.approx(3 + 1 / lam, abs=5 * m["fourth_moment_se"][0])
    np.testing.assert_allclose(m["covariance"], [[1.0]], atol=0.01)


def test_moment_estimators_known_sample():
    m = stats.moment_estimators(np.array([-1.0, 1.0] * 10))
    assert m["kappa4"][0] == pytest.approx(1.0 - 3.0)
    assert m["fourth_moment"][0] == pytest.approx(1.0)


def test_poisson_w1_below_univariate_bound():
    lam = 25.0
    x = (np.random.default_rng(4).poisson(lam, 100_000) - lam) / math.sqrt(lam)
    z = stats.sample_gaussian(CovMatrix([[1.0]]), 100_000, seed=4).column()
    w, se = stats.wasserstein1_1d_se(x, z)
    assert w <= univariate_bound(1, 1.0, 1 / lam)[0] + 4 * se


def test_sample_set_validation():
    with pytest.raises(ValueError):
        SampleSet([1.0])
    with pytest.raises(ValueError):
        SampleSet([1.0, np.inf])
    assert SampleSet(np.zeros((5, 3))).d == 3
