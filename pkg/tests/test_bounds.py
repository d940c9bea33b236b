import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from poissonfmt import bounds
from poissonfmt.bounds import CovMatrix, SmoothnessSpec
from poissonfmt.families import kernel_family_cycle, kernel_family_spread


def test_univariate_reference_values():
    b1, b2 = bounds.univariate_bound(1, 1.0, 1.0)
    assert b1 == pytest.approx(1 / math.sqrt(2 * math.pi) + 2 / 3, rel=1e-14)
    assert b1 == pytest.approx(1.06561, abs=1e-5)
    assert b2 == pytest.approx(math.sqrt(2 / math.pi) + 4 / 3, rel=1e-14)
    assert b1 <= b2


@given(q=st.integers(1, 6), s2=st.floats(0.01, 100.0), k4=st.one_of(st.just(0.0), st.floats(1e-8, 50.0)))
def test_b1_below_b2_and_scaling(q, s2, k4):
    b1, b2 = bounds.univariate_bound(q, s2, k4)
    assert b1 <= b2 * (1 + 1e-12)
    # W1 is 1-homogeneous: scaling F by c scales sigma by c and sqrt(kappa4) by c^2
    c = 1.7
    c1, c2 = bounds.univariate_bound(q, c**2 * s2, c**4 * k4)
    assert c1 == pytest.approx(c * b1, rel=1e-12, abs=1e-300)
    assert c2 == pytest.approx(c * b2, rel=1e-12, abs=1e-300)


def test_plugin_1d_reproduces_univariate_bound():
    for q in (1, 2, 3, 4):
        s2, k4 = 2.5, 0.3
        mean_abs_s = (2 * q - 1) * math.sqrt(k4) / s2
        rho = 2 * (4 * q - 3) * k4 / s2**2
        got = bounds.plugin_bound_1d(q, mean_abs_s, 0.0, s2, rho)
        assert got == pytest.approx(bounds.univariate_bound(q, s2, k4)[0], rel=1e-12)


def test_multivariate_reference_constants():
    c = bounds.multivariate_constants(2, 2, 2, CovMatrix(np.eye(2)), SmoothnessSpec(M1=1, M2=1, M3=1))
    assert c["A2"] == pytest.approx(0.75, rel=1e-14)
    assert c["B3"] == pytest.approx(0.75 + 8 / 18, rel=1e-14)
    assert c["B3"] == pytest.approx(1.19444, abs=1e-5)
    assert c["A1"] == pytest.approx(3 / (2 * math.sqrt(math.pi)), rel=1e-14)


@given(seed=st.integers(0, 2**32 - 1), d=st.integers(1, 4), q1=st.integers(1, 3), dq=st.integers(0, 2))
def test_plugin_constants_match_chaos_constants(seed, d, q1, dq):
    rng = np.random.default_rng(seed)
    qd = q1 + (dq if d > 1 else 0)
    A = rng.standard_normal((d, d))
    Sigma = CovMatrix(A @ A.T + 0.1 * np.eye(d))
    spec = SmoothnessSpec(*rng.uniform(0.1, 2.0, size=3))
    orders = np.sort(rng.integers(q1, qd + 1, size=d))
    orders[0], orders[-1] = q1, qd
    c = bounds.multivariate_constants(q1, qd, d, Sigma, spec)
    th = bounds.plugin_constants_md(orders, Sigma, spec, "C3")
    k = bounds.plugin_constants_md(orders, Sigma, spec, "C2")
    tr = Sigma.trace
    assert c["A2"] == pytest.approx(math.sqrt(2) * (2 * qd - 1) * th["Theta1"], rel=1e-12)
    assert c["B3"] == pytest.approx(c["A2"] + 4 * qd * math.sqrt(tr) * th["Theta2"], rel=1e-12)
    assert c["A1"] == pytest.approx(math.sqrt(2) * (2 * qd - 1) * k["K1"], rel=1e-12)
    assert c["B2"] == pytest.approx(c["A1"] + 4 * qd * math.sqrt(tr) * k["K2"], rel=1e-12)


def test_multivariate_bound_terms():
    Sigma = CovMatrix(np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.5], [0.0, 0.5, 1.0]]))
    spec = SmoothnessSpec(M1=1, M2=1, M3=1)
    k4, m4 = [0.1, 0.2, 0.05], [3.1, 3.2, 3.05]
    rep = bounds.multivariate_bound([1, 2, 2], Sigma, k4, m4, spec)
    c = bounds.multivariate_constants(1, 2, 3, Sigma, spec)
    lead = c["B3"] * sum(map(math.sqrt, k4))
    cross = c["A2"] * (3.1**0.25 + 3.2**0.25) * (0.2**0.25 + 0.05**0.25)
    assert rep.total == pytest.approx(lead + cross, rel=1e-14)
    assert len(rep.to_json()["inputs_digest"]) == 16
    c2 = bounds.multivariate_bound([1, 2, 2], Sigma, k4, m4, spec, "C2")
    assert set(c2.constants) == {"B2", "A1"}
    same = bounds.multivariate_bound([2, 2], CovMatrix(np.eye(2)), [0.1, 0.2], [3.1, 3.2], spec, "same_chaos")
    full = bounds.multivariate_bound([2, 2], CovMatrix(np.eye(2)), [0.1, 0.2], [3.1, 3.2], spec)
    assert same.total <= full.total
    with pytest.raises(ValueError):
        bounds.multivariate_bound([2, 1], CovMatrix(np.eye(2)), [0.1, 0.2], [3, 3], spec)
    with pytest.raises(ValueError):
        bounds.multivariate_bound([1, 2], CovMatrix(np.eye(2)), [0.1, 0.2], [3, 3], spec, "same_chaos")


def test_c2_variant_needs_positive_definite_sigma():
    Sigma = CovMatrix(np.ones((2, 2)))
    assert Sigma.is_psd and not Sigma.is_positive_definite
    spec = SmoothnessSpec(M1=1, M2=1, M3=1)
    assert "A1" not in bounds.multivariate_constants(1, 1, 2, Sigma, spec)
    with pytest.raises(ValueError):
        bounds.multivariate_bound([1, 1], Sigma, [0.1, 0.1], [3, 3], spec, "C2")


def test_kappa4_round_off_clamped_and_negative_rejected():
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        b1, _ = bounds.univariate_bound(2, 1.0, -1e-13)
    assert b1 == 0.0 and caught
    with pytest.raises(ValueError):
        bounds.univariate_bound(2, 1.0, -1e-3)
    with pytest.raises(ValueError):
        bounds.univariate_bound(0, 1.0, 1.0)


def test_covmatrix_properties():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((4, 4))
    S = CovMatrix(A @ A.T + np.eye(4))
    assert S.hs_norm <= math.sqrt(4) * S.op_norm + 1e-12
    assert S.op_norm <= S.hs_norm + 1e-12
    np.testing.assert_allclose(S.inv_sqrt @ S.matrix @ S.inv_sqrt, np.eye(4), atol=1e-10)
    assert S.inv_sqrt_op_norm == pytest.approx(1 / math.sqrt(S.min_eigenvalue))
    with pytest.raises(ValueError):
        CovMatrix(np.array([[1.0, 2.0], [0.0, 1.0]]))
    B = CovMatrix(np.diag([1.0, 2.0, 3.0]), orders=[1, 2, 2])
    assert B.block_diagonal_violation() == 0.0
    C = CovMatrix(np.array([[1.0, 0.1], [0.1, 1.0]]), orders=[1, 2])
    assert C.block_diagonal_violation() == pytest.approx(0.1)


def test_gaussian_fourth_moment_by_sampling():
    Sigma = CovMatrix(np.array([[2.0, 0.3], [0.3, 0.5]]))
    z = np.random.default_rng(1).multivariate_normal([0, 0], Sigma.matrix, size=400_000)
    r4 = np.sum(z**2, axis=1) ** 2
    assert abs(r4.mean() - bounds.gaussian_fourth_moment(Sigma)) < 5 * r4.std() / math.sqrt(r4.size)


def test_smoothness_spec_validation():
    with pytest.raises(ValueError):
        SmoothnessSpec(M1=-1.0)
    with pytest.raises(ValueError):
        SmoothnessSpec(M2=1.0, M2_hs=2.0).check_dimension(2)


def test_transfer_check_on_cycle_family():
    ns = (8, 16, 32, 64)
    rep = bounds.transfer_principle_check([kernel_family_cycle(2, n) for n in ns], tol=0.5)
    assert rep.inequality_ok and rep.contractions_decrease and rep.kappa4_vanishes and rep.implication_ok
    # q = 2 cycle windows: kappa4 = 31 / n
    np.testing.assert_allclose([r.kappa4 for r in rep.rows], [31 / n for n in ns], rtol=1e-10)
    assert rep.rows[0].norm2 == pytest.approx(1.0)


def test_transfer_check_on_spread_family_does_not_vanish():
    rep = bounds.transfer_principle_check([kernel_family_spread(2, n) for n in (4, 8, 16)])
    assert rep.inequality_ok
    assert not rep.kappa4_vanishes
    assert rep.implication_ok
