"""Kernel families and random generators used by experiments and tests."""
from __future__ import annotations

import itertools
import math
from typing import Sequence

import numpy as np

from .chaos import ChaosElement
from .kernels import GroundSpace, Kernel, norm

__all__ = [
    "elementary_symmetric",
    "kernel_family_spread",
    "kernel_family_cycle",
    "kernel_family_signed",
    "normalize",
    "random_kernel",
    "random_element",
]


def elementary_symmetric(x: Sequence[float], q: int) -> float:
    """``e_q(x) = sum_{i_1 < ... < i_q} x_{i_1} ... x_{i_q}``."""
    e = np.zeros(q + 1)
    e[0] = 1.0
    for v in x:
        e[1:] = e[1:] + v * e[:-1]
    return float(e[q])


def normalize(f: Kernel) -> Kernel:
    """Scale so that ``q! ||f||^2 = 1`` (the variance of the multiple integral)."""
    v = math.factorial(f.order) * norm(f) ** 2
    if v <= 0:
        raise ValueError("cannot normalize a zero kernel")
    return f * (1.0 / math.sqrt(v))


def _space(n_cells: int, intensity) -> GroundSpace:
    if np.ndim(intensity) == 0:
        return GroundSpace.uniform(n_cells, float(intensity))
    space = GroundSpace(tuple(intensity))
    if space.n_cells != n_cells:
        raise ValueError("intensity list length differs from n_cells")
    return space


def kernel_family_spread(q: int, n_cells: int, intensity=1.0) -> Kernel:
    """Constant on all q-tuples of distinct cells, normalized to unit variance.

    The value is ``1 / (q! sqrt(e_q(mu)))``.  For ``q = 1`` this is the CLT
    family ``sum eta_hat_i / sqrt(sum mu_i)``; for ``q >= 2`` it converges to a
    non-Gaussian law (a centred chi-square for ``q = 2``).
    """
    if q < 1:
        raise ValueError("order must be at least 1")
    if n_cells < q:
        raise ValueError("need at least q cells for an off-diagonal tuple")
    space = _space(n_cells, intensity)
    c = 1.0 / (math.factorial(q) * math.sqrt(elementary_symmetric(space.mu, q)))
    idx = np.indices((n_cells,) * q)
    distinct = np.ones((n_cells,) * q, dtype=bool)
    for a, b in itertools.combinations(range(q), 2):
        distinct &= idx[a] != idx[b]
    v = np.where(distinct, c, 0.0)
    f = Kernel(space, v)
    assert abs(math.factorial(q) * norm(f) ** 2 - 1.0) < 1e-9
    return f


def kernel_family_signed(q: int, n_cells: int, intensity=1.0, seed: int = 0) -> Kernel:
    """Spread magnitudes with pseudo-random signs per index set, unit variance.

    Unlike the plain spread family the signs make every contraction small, so
    this is a CLT family; dense support also avoids lattice effects for
    two-point drivers.
    """
    f = kernel_family_spread(q, n_cells, intensity)
    if q == 1:
        return f
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(q, n_cells))))
    signs = np.zeros((n_cells,) * q)
    for c in itertools.combinations(range(n_cells), q):
        s = 1.0 if rng.random() < 0.5 else -1.0
        for p in itertools.permutations(c):
            signs[p] = s
    return Kernel(f.space, f.values * signs)


def kernel_family_cycle(q: int, n_cells: int, intensity=1.0, step: int = 1) -> Kernel:
    """Cyclic windows ``{i, i+s, ..., i+(q-1)s} mod n``, constant on each, unit variance.

    Every cell meets at most ``q`` windows, so all contractions vanish as
    ``n`` grows: this is a fourth-moment (CLT) family for every ``q``.
    """
    if q < 1:
        raise ValueError("order must be at least 1")
    windows = {tuple(sorted({(i + k * step) % n_cells for k in range(q)})) for i in range(n_cells)}
    windows = sorted(w for w in windows if len(w) == q)
    if not windows:
        raise ValueError("no window of q distinct cells; increase n_cells or change the step")
    space = _space(n_cells, intensity)
    v = np.zeros((n_cells,) * q)
    for w in windows:
        for p in itertools.permutations(w):
            v[p] = 1.0
    return normalize(Kernel(space, v))


def random_kernel(space: GroundSpace, q: int, rng: np.random.Generator,
                  diagonal_free: bool = True, density: float = 1.0) -> Kernel:
    """Random symmetric kernel (Gaussian entries, optional sparsity)."""
    m = space.n_cells
    if diagonal_free and q > m:
        return Kernel(space, np.zeros((m,) * q))
    v = np.zeros((m,) * q)
    combos = (itertools.combinations(range(m), q) if diagonal_free
              else itertools.combinations_with_replacement(range(m), q))
    for c in combos:
        if density < 1.0 and rng.random() > density:
            continue
        x = rng.standard_normal()
        for p in set(itertools.permutations(c)):
            v[p] = x
    return Kernel(space, v)


def random_element(space: GroundSpace, q: int, rng: np.random.Generator, max_terms: int = 8) -> ChaosElement:
    """Random homogeneous element of grade ``q`` in the product Charlier basis.

    Multi-indices may put several units of degree on one cell, so these
    elements include kernels that do not vanish on diagonals.
    """
    if q == 0:
        return ChaosElement.constant(space, float(rng.standard_normal()))
    m = space.n_cells
    terms: dict = {}
    for _ in range(int(rng.integers(1, max_terms + 1))):
        deg = np.bincount(rng.integers(0, m, size=q), minlength=m)
        alpha = tuple((int(i), int(d)) for i, d in enumerate(deg) if d)
        terms[alpha] = terms.get(alpha, 0.0) + float(rng.standard_normal())
    return ChaosElement(space, terms)
