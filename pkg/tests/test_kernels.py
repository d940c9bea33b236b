import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from poissonfmt.families import random_kernel
from poissonfmt.kernels import (GroundSpace, Kernel, contract, contraction_identity_check, inner, norm,
                                symmetric_tensor, symmetrize, tensor)

from oracles import contraction_loops, symmetrize_loops, weighted_inner_loops


def _space(rng, m):
    return GroundSpace(tuple(rng.uniform(0.1, 3.0, size=m)))


@given(seed=st.integers(0, 2**32 - 1), p=st.integers(1, 3), q=st.integers(1, 3), m=st.integers(1, 3))
def test_contract_matches_loops(seed, p, q, m):
    rng = np.random.default_rng(seed)
    space = _space(rng, m)
    f = Kernel(space, rng.standard_normal((m,) * p))
    g = Kernel(space, rng.standard_normal((m,) * q))
    for r in range(min(p, q) + 1):
        got = contract(f, g, r).values
        want = contraction_loops(f.values, g.values, space.mu, r)
        np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-12)


def test_full_contraction_is_inner_product():
    rng = np.random.default_rng(1)
    space = _space(rng, 3)
    f = Kernel(space, rng.standard_normal((3, 3)))
    g = Kernel(space, rng.standard_normal((3, 3)))
    assert contract(f, g, 2).values == pytest.approx(inner(f, g), rel=1e-13)
    assert inner(f, g) == pytest.approx(weighted_inner_loops(f.values, g.values, space.mu), rel=1e-13)


def test_symmetrize_matches_permutation_average():
    rng = np.random.default_rng(2)
    f = Kernel(GroundSpace.uniform(3), rng.standard_normal((3, 3, 3)))
    s = symmetrize(f)
    np.testing.assert_allclose(s.values, symmetrize_loops(f.values), atol=1e-14)
    assert s.is_symmetric and not f.is_symmetric
    np.testing.assert_allclose(symmetrize(s).values, s.values, atol=1e-14)


@given(seed=st.integers(0, 2**32 - 1), p=st.integers(1, 3), q=st.integers(1, 3))
def test_symmetric_tensor_shuffles(seed, p, q):
    rng = np.random.default_rng(seed)
    space = _space(rng, 3)
    f, g = random_kernel(space, p, rng, diagonal_free=False), random_kernel(space, q, rng, diagonal_free=False)
    np.testing.assert_allclose(symmetric_tensor(f, g).values, symmetrize(tensor(f, g)).values, atol=1e-13)


@given(seed=st.integers(0, 2**32 - 1), p=st.integers(1, 4), q=st.integers(1, 4),
       m=st.integers(1, 5), diag_free=st.booleans())
def test_product_norm_identity(seed, p, q, m, diag_free):
    rng = np.random.default_rng(seed)
    space = _space(rng, m)
    f, g = random_kernel(space, p, rng, diag_free), random_kernel(space, q, rng, diag_free)
    rep = contraction_identity_check(f, g)
    assert rep.relative_gap <= 1e-10
    assert rep.lower_bound_slack >= -1e-10 * max(rep.rhs, 1e-300)
    if p == q:
        assert rep.inner_relative_gap <= 1e-10


def test_identity_for_first_order_kernels_by_hand():
    # p = q = 1: 2 ||sym(f x g)||^2 = ||f||^2 ||g||^2 + <f, g>^2
    space = GroundSpace((0.5, 2.0))
    f, g = Kernel(space, [1.0, 2.0]), Kernel(space, [3.0, -1.0])
    rep = contraction_identity_check(f, g)
    nf2, ng2, fg = 0.5 + 8.0, 4.5 + 2.0, 1.5 - 4.0
    assert rep.rhs == pytest.approx(nf2 * ng2 + fg**2, rel=1e-14)
    assert rep.lhs == pytest.approx(rep.rhs, rel=1e-14)


def test_identity_rejects_asymmetric():
    space = GroundSpace.uniform(2)
    f = Kernel(space, [[0.0, 1.0], [0.0, 0.0]])
    with pytest.raises(ValueError):
        contraction_identity_check(f, f)


def test_kernel_validation_and_json_roundtrip():
    space = GroundSpace((1.0, 0.5, 2.0))
    with pytest.raises(ValueError):
        Kernel(space, np.zeros((3, 2)))
    with pytest.raises(ValueError):
        Kernel(space, [np.nan, 0.0, 0.0])
    with pytest.raises(ValueError):
        GroundSpace((1.0, 0.0))
    f = symmetrize(Kernel(space, np.arange(9.0).reshape(3, 3)))
    back = Kernel.from_json(f.to_json())
    np.testing.assert_array_equal(back.values, f.values)
    assert back.space == space and back.digest() == f.digest()
    assert norm(f) == pytest.approx(math.sqrt(weighted_inner_loops(f.values, f.values, space.mu)))
    with pytest.raises(ValueError):
        f.values[0, 0] = 1.0


def test_breakpoint_space():
    space = GroundSpace.from_breakpoints([0.0, 0.25, 1.0])
    np.testing.assert_allclose(space.mu, [0.25, 0.75])
