"""Monic Charlier polynomials for the Poisson(lambda) law.

``C_{n+1}(x) = (x - n - lam) C_n(x) - n lam C_{n-1}(x)`` with ``C_0 = 1`` and
``C_1 = x - lam``; then ``E[C_m(X) C_n(X)] = delta_{mn} n! lam^n`` for
``X ~ Poisson(lam)``.  On a single atom ``A`` of mass ``lam`` the polynomial
``C_q(eta(A))`` is the q-th order multiple integral of ``1_A^{(x)q}``.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

__all__ = [
    "MAX_DEGREE",
    "CharlierTable",
    "charlier_values",
    "charlier_norm2",
    "linearization",
]

MAX_DEGREE = 32


def _check_degree(n: int) -> None:
    if n > MAX_DEGREE:
        raise ValueError(
            f"Charlier degree {n} exceeds the configured cap {MAX_DEGREE}; "
            "this is a configuration error, not something to truncate"
        )


def charlier_norm2(n: int, lam: float) -> float:
    """``E[C_n^2] = n! lam^n``."""
    return math.factorial(n) * lam**n


def charlier_values(x, lam: float, max_degree: int) -> np.ndarray:
    """Values ``C_0(x) .. C_D(x)`` stacked along a new leading axis."""
    _check_degree(max_degree)
    x = np.asarray(x, dtype=float)
    out = np.empty((max_degree + 1,) + x.shape)
    out[0] = 1.0
    if max_degree >= 1:
        out[1] = x - lam
    for n in range(1, max_degree):
        out[n + 1] = (x - n - lam) * out[n] - n * lam * out[n - 1]
    return out


@lru_cache(maxsize=None)
def linearization(a: int, b: int, lam: float) -> tuple[tuple[int, float], ...]:
    """Coefficients of ``C_a C_b`` in the Charlier basis as ``((k, c_k), ...)``.

    Uses the single-atom product formula for Poisson multiple integrals:
    ``C_a C_b = sum_{r<=min(a,b)} r! C(a,r) C(b,r) sum_{l<=r} C(r,l) lam^l C_{a+b-r-l}``.
    All coefficients are nonnegative, so there is no cancellation.
    """
    _check_degree(a + b)
    acc: dict[int, float] = {}
    for r in range(min(a, b) + 1):
        w = math.factorial(r) * math.comb(a, r) * math.comb(b, r)
        for l in range(r + 1):
            k = a + b - r - l
            acc[k] = acc.get(k, 0.0) + w * math.comb(r, l) * lam**l
    return tuple(sorted(acc.items(), reverse=True))


class CharlierTable:
    """Monomial coefficient rows and change-of-basis matrices up to ``max_degree``.

    ``coeffs[n, j]`` is the coefficient of ``x^j`` in ``C_n``. The monomial
    route is exact in principle but loses accuracy quickly when ``lam`` and the
    degree are both large; the chaos engine itself only uses
    :func:`linearization` and :func:`charlier_values`.
    """

    def __init__(self, lam: float, max_degree: int):
        _check_degree(max_degree)
        if not lam > 0:
            raise ValueError("Charlier parameter must be positive")
        self.lam = float(lam)
        self.max_degree = int(max_degree)
        D = self.max_degree
        c = np.zeros((D + 1, D + 1))
        c[0, 0] = 1.0
        if D >= 1:
            c[1, 0], c[1, 1] = -self.lam, 1.0
        for n in range(1, D):
            c[n + 1, 1:] += c[n, :-1]
            c[n + 1] += -(n + self.lam) * c[n] - n * self.lam * c[n - 1]
        c.setflags(write=False)
        self.coeffs = c

    @property
    def to_monomial(self) -> np.ndarray:
        """Row-vector map: Charlier coordinates ``a`` -> monomial coordinates ``a @ M``."""
        return self.coeffs

    @property
    def from_monomial(self) -> np.ndarray:
        # unit lower-triangular, so the inverse is exact up to rounding
        return np.linalg.inv(self.coeffs)

    def norms2(self) -> np.ndarray:
        return np.array([charlier_norm2(n, self.lam) for n in range(self.max_degree + 1)])

    def product(self, a: int, b: int) -> np.ndarray:
        """Dense coefficient vector of ``C_a C_b`` (length ``max_degree + 1``)."""
        if a + b > self.max_degree:
            raise ValueError("product degree exceeds table capacity")
        out = np.zeros(self.max_degree + 1)
        for k, v in linearization(a, b, self.lam):
            out[k] = v
        return out

    def evaluate(self, x, max_degree: int | None = None) -> np.ndarray:
        return charlier_values(x, self.lam, self.max_degree if max_degree is None else max_degree)
