import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats as sps

from poissonfmt import chaos, sampling
from poissonfmt.chaos import ChaosElement
from poissonfmt.families import kernel_family_cycle, kernel_family_spread, random_element, random_kernel
from poissonfmt.kernels import GroundSpace, Kernel, norm
from poissonfmt.stats import read_samples_csv

SPACE = GroundSpace((0.5, 2.0, 5.0))


def test_sample_measure_moments_and_determinism():
    a = sampling.sample_measure(SPACE, 3, 200_000).counts
    np.testing.assert_allclose(a.mean(axis=0), SPACE.mu, rtol=0.02)
    np.testing.assert_allclose(a.var(axis=0), SPACE.mu, rtol=0.03)
    b = sampling.sample_measure(SPACE, 3, 200_000).counts
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, sampling.sample_measure(SPACE, 4, 200_000).counts)
    assert sampling.sample_measure(SPACE, 3).counts.shape == (3,)


def test_block_streams_do_not_depend_on_total_size():
    a = sampling.sample_measure(SPACE, 9, 10_000).counts
    b = sampling.sample_measure(SPACE, 9, 4096 * 2 + 5).counts
    np.testing.assert_array_equal(a[:8192], b[:8192])


def test_thin_at_zero_is_identity():
    base = sampling.sample_measure(SPACE, 1, 1000)
    pair = sampling.thin(base, 0.0, 1)
    np.testing.assert_array_equal(pair.retained, base.counts)
    assert not pair.fresh.any()
    with pytest.raises(ValueError):
        sampling.thin(base, -0.1, 1)


def test_thinning_laws_and_nesting():
    n = 200_000
    base = sampling.sample_measure(SPACE, 2, n)
    ts = [0.05, 0.5, 0.2]
    pairs = sampling.thin_path(base, ts, 2)
    for t, pair in zip(ts, pairs):
        ev = pair.evolved.counts
        np.testing.assert_allclose(ev.mean(axis=0), SPACE.mu, rtol=0.02)
        np.testing.assert_allclose(ev.var(axis=0), SPACE.mu, rtol=0.03)
        np.testing.assert_allclose(pair.retained.mean(axis=0), math.exp(-t) * SPACE.mu, rtol=0.02)
        # covariance of eta and eta^t is e^{-t} mu
        cov = np.mean((ev - SPACE.mu) * (base.counts - SPACE.mu), axis=0)
        np.testing.assert_allclose(cov, math.exp(-t) * SPACE.mu, rtol=0.05)
    small, large, mid = pairs
    assert np.all(large.retained <= mid.retained) and np.all(mid.retained <= small.retained)
    assert np.all(large.fresh >= mid.fresh) and np.all(mid.fresh >= small.fresh)


@pytest.mark.parametrize("order", [1, 2])
def test_extrapolation_weights_exact_on_polynomials(order):
    ts = (0.2, 0.1, 0.05)
    w = sampling.extrapolation_weights(ts, order)
    assert w.sum() == pytest.approx(1.0)
    for deg in range(order + 1):
        y = np.array(ts) ** deg
        assert w @ y == pytest.approx(1.0 if deg == 0 else 0.0, abs=1e-12)
    y = 3.0 - 2.0 * np.array(ts) + (0.7 * np.array(ts) ** 2 if order == 2 else 0.0)
    assert w @ y == pytest.approx(3.0, abs=1e-12)


@pytest.mark.parametrize("q", [1, 2])
def test_mehler_formula(q):
    F = random_element(GroundSpace.uniform(3, 2.0), q, np.random.default_rng(q), 4)
    rep = sampling.mehler_check(F, 0.3, 60, 400, seed=5)
    assert rep.max_abs_z < 4.5


def test_rho_of_first_chaos():
    F = ChaosElement.charlier(GroundSpace((4.0,)), 0, 1)
    rep = sampling.estimate_rho(F, n=100_000, seed=3)
    assert float(rep.exact) == pytest.approx(8.0)
    assert abs(float(rep.estimate) - 8.0) <= 4 * float(rep.se)


def test_gamma_limit_matches_carre_du_champ():
    F = random_element(GroundSpace.uniform(2, 3.0), 2, np.random.default_rng(8), 3)
    G = random_element(GroundSpace.uniform(2, 3.0), 1, np.random.default_rng(9), 3)
    rep = sampling.estimate_gamma_limit(F, G, n_outer=40, n_inner=400, seed=1)
    assert rep.max_abs_z < 4.5


@pytest.mark.parametrize("q,t", [(1, 0.2), (2, 1.0)])
def test_exchangeability(q, t):
    F = random_element(GroundSpace.uniform(3, 2.0), q, np.random.default_rng(q), 4)
    rep = sampling.exchangeability_test(F, t, 20_000, seed=2)
    assert rep.passes(0.001)


def test_exchangeability_detects_a_broken_pair():
    # refilling at the wrong intensity breaks the marginal law
    F = ChaosElement.charlier(GroundSpace((2.0,)), 0, 1)
    base = sampling.sample_measure(F.space, 0, 20_000)
    pair = sampling.thin(base, 1.0, 0)
    f0 = chaos.evaluate(F, base.counts)
    ft = chaos.evaluate(F, pair.retained + 2 * pair.fresh)
    assert sps.ks_2samp(f0[:10_000], ft[10_000:]).pvalue < 1e-6


@pytest.mark.parametrize("driver", sorted(sampling.DRIVERS))
def test_homogeneous_sum_variance(driver):
    f = kernel_family_cycle(2, 8, intensity=(0.5, 1, 2, 3, 1, 1, 4, 0.25))
    x = sampling.sample_homogeneous_sums([f], driver, 100_000, seed=4)[:, 0]
    target = 2 * np.sum(f.values**2)
    se = np.std(x**2) / math.sqrt(x.size)
    assert abs(np.mean(x**2) - target) < 5 * se
    assert abs(x.mean()) < 5 * x.std() / math.sqrt(x.size)


def test_poisson_sum_matches_exact_element():
    f = kernel_family_cycle(2, 6, intensity=(0.5, 1, 2, 3, 1, 4))
    F = sampling.homogeneous_sum_element(f)
    assert chaos.variance(F) == pytest.approx(2 * np.sum(f.values**2), rel=1e-12)
    x = sampling.sample_homogeneous_sums([f], "poisson", 200_000, seed=6)[:, 0]
    se = np.std((x - x.mean()) ** 4) / math.sqrt(x.size)
    assert abs(np.mean((x - x.mean()) ** 4) - chaos.moment4(F)) < 5 * se


def test_first_order_poisson_sum_kappa4():
    # coefficients act on normalized drivers: Q = sum P_i / sqrt(n), kappa4 = 1 / (n mu)
    f = Kernel(GroundSpace.uniform(20, 0.5), np.full(20, 1 / math.sqrt(20)))
    F = sampling.homogeneous_sum_element(f)
    assert chaos.variance(F) == pytest.approx(1.0)
    assert chaos.fourth_cumulant(F) == pytest.approx(1 / 10, rel=1e-10)


@given(seed=st.integers(0, 2**32 - 1), q=st.integers(1, 3))
def test_dense_and_term_plans_agree(seed, q):
    rng = np.random.default_rng(seed)
    space = GroundSpace.uniform(5)
    f = random_kernel(space, q, rng, density=0.6)
    X = rng.standard_normal((7, 5))
    cells, coeff = sampling._multilinear_terms(f)
    np.testing.assert_allclose(sampling._dense_form(X, f.values.reshape(5, -1)),
                               sampling._term_form(X, cells, coeff), atol=1e-12)


def test_gaussian_first_order_sum_is_normal():
    f = kernel_family_spread(1, 10)
    x = sampling.sample_homogeneous_sums([f], "gaussian", 20_000, seed=0)[:, 0]
    assert sps.kstest(x, "norm").pvalue > 0.001


def test_sums_reject_diagonal_kernels_and_mixed_spaces():
    space = GroundSpace.uniform(3)
    with pytest.raises(ValueError):
        sampling.sample_homogeneous_sums([Kernel(space, np.eye(3))], "gaussian", 10, 0)
    other = kernel_family_spread(1, 4)
    with pytest.raises(ValueError):
        sampling.sample_homogeneous_sums([kernel_family_spread(1, 3), other], "gaussian", 10, 0)


def test_samples_csv_roundtrip(tmp_path):
    ks = [kernel_family_spread(1, 4), kernel_family_cycle(2, 4)]
    x = sampling.sample_homogeneous_sums(ks, "uniform", 50, seed=12)
    path = sampling.write_samples_csv(tmp_path / "s.csv", x, ks, 12)
    raw = path.read_bytes()
    assert raw.count(b"\r\n") == 51
    header, back = read_samples_csv(path)
    assert header == [f"Q1_q1_{ks[0].digest()}_seed12", f"Q2_q2_{ks[1].digest()}_seed12"]
    assert back.seed == 12
    np.testing.assert_array_equal(back.data, x)
    assert norm(ks[1]) > 0
