"""Exact Wiener-Ito chaos calculus on a discretized Poisson space.

A :class:`ChaosElement` is a finite expansion in the product Charlier basis
``B_alpha = prod_i C_{alpha_i}(eta_i; mu_i)``.  The basis is orthogonal with
``E[B_alpha B_beta] = delta_{alpha beta} prod_i alpha_i! mu_i^{alpha_i}`` and
the total degree of ``alpha`` is its chaos grade, so ``J_k`` is simply "keep
the terms of total degree k".
"""
from __future__ import annotations

import itertools
import json
import math
from collections import defaultdict
from types import MappingProxyType
from typing import Iterable, Mapping

import numpy as np

from .charlier import MAX_DEGREE, charlier_values, linearization
from .kernels import GroundSpace, Kernel

__all__ = [
    "MultiIndex",
    "ChaosElement",
    "integral_from_kernel",
    "kernel_of",
    "multiply",
    "project",
    "expectation",
    "covariance",
    "inner",
    "variance",
    "moment2",
    "make_index",
    "total_degree",
    "apply_L",
    "semigroup",
    "gamma",
    "moment4",
    "fourth_cumulant",
    "rho",
    "evaluate",
]

# sorted tuple of (cell, degree) pairs, degrees > 0
MultiIndex = tuple

_EMPTY: MultiIndex = ()
_EVAL_CHUNK = 1 << 22  # max entries in one (terms x samples) product block


def make_index(degrees: Mapping[int, int] | Iterable[tuple[int, int]]) -> MultiIndex:
    items = degrees.items() if isinstance(degrees, Mapping) else degrees
    acc: dict[int, int] = defaultdict(int)
    for cell, deg in items:
        if deg < 0:
            raise ValueError("negative degree in multi-index")
        acc[int(cell)] += int(deg)
    return tuple(sorted((c, d) for c, d in acc.items() if d > 0))


def total_degree(alpha: MultiIndex) -> int:
    return sum(d for _, d in alpha)


class ChaosElement:
    """Immutable sparse Charlier expansion of a Poisson functional."""

    __slots__ = ("space", "_terms", "_mu", "_square", "_compiled")

    def __init__(self, space: GroundSpace, terms: Mapping[MultiIndex, float] | None = None):
        self.space = space
        m = space.n_cells
        clean: dict[MultiIndex, float] = {}
        for alpha, c in (terms or {}).items():
            c = float(c)
            if c == 0.0:
                continue
            for cell, deg in alpha:
                if not 0 <= cell < m:
                    raise ValueError(f"cell {cell} outside ground space of {m} cells")
                if deg > MAX_DEGREE:
                    raise ValueError(f"per-cell degree {deg} exceeds cap {MAX_DEGREE}")
            clean[alpha] = clean.get(alpha, 0.0) + c
        self._terms = MappingProxyType(clean)
        self._mu = space.intensities
        self._square = None
        self._compiled = None

    # -- construction -----------------------------------------------------
    @classmethod
    def constant(cls, space: GroundSpace, c: float) -> "ChaosElement":
        return cls(space, {_EMPTY: c})

    @classmethod
    def charlier(cls, space: GroundSpace, cell: int, degree: int, coeff: float = 1.0) -> "ChaosElement":
        return cls(space, {make_index([(cell, degree)]): coeff})

    @property
    def terms(self) -> Mapping[MultiIndex, float]:
        return self._terms

    def __len__(self) -> int:
        return len(self._terms)

    def __repr__(self) -> str:
        return f"ChaosElement({len(self)} terms, grades={sorted(self.grades())})"

    # -- structure --------------------------------------------------------
    def grades(self) -> set[int]:
        return {total_degree(a) for a in self._terms}

    @property
    def degree(self) -> int:
        return max(self.grades(), default=0)

    def homogeneous_grade(self) -> int:
        """Grade of a homogeneous element; raises otherwise."""
        g = self.grades()
        if len(g) != 1:
            raise ValueError(f"element is not homogeneous (grades {sorted(g)})")
        return next(iter(g))

    def weight(self, alpha: MultiIndex) -> float:
        """``E[B_alpha^2]``."""
        mu = self._mu
        w = 1.0
        for cell, deg in alpha:
            w *= math.factorial(deg) * mu[cell] ** deg
        return w

    # -- linear structure -------------------------------------------------
    def _check(self, other: "ChaosElement") -> None:
        if self.space != other.space:
            raise ValueError("chaos elements live on different ground spaces")

    def __add__(self, other):
        if not isinstance(other, ChaosElement):
            other = ChaosElement.constant(self.space, float(other))
        self._check(other)
        acc = dict(self._terms)
        for a, c in other._terms.items():
            acc[a] = acc.get(a, 0.0) + c
        return ChaosElement(self.space, acc)

    __radd__ = __add__

    def __neg__(self):
        return self.scale(-1.0)

    def __sub__(self, other):
        if not isinstance(other, ChaosElement):
            other = ChaosElement.constant(self.space, float(other))
        return self + (-other)

    def scale(self, c: float) -> "ChaosElement":
        return ChaosElement(self.space, {a: c * v for a, v in self._terms.items()})

    def __mul__(self, other):
        if isinstance(other, ChaosElement):
            return multiply(self, other)
        return self.scale(float(other))

    def __rmul__(self, other):
        return self.scale(float(other))

    def map_grades(self, fn) -> "ChaosElement":
        """Multiply each grade-k component by ``fn(k)``."""
        return ChaosElement(self.space, {a: fn(total_degree(a)) * c for a, c in self._terms.items()})

    def square(self) -> "ChaosElement":
        if self._square is None:
            self._square = multiply(self, self)
        return self._square

    def allclose(self, other: "ChaosElement", rtol: float = 1e-10, atol: float = 0.0) -> bool:
        self._check(other)
        keys = set(self._terms) | set(other._terms)
        scale = max((abs(v) for v in itertools.chain(self._terms.values(), other._terms.values())), default=0.0)
        return all(
            abs(self._terms.get(k, 0.0) - other._terms.get(k, 0.0)) <= atol + rtol * scale for k in keys
        )

    # -- serialization ----------------------------------------------------
    def to_json(self) -> dict:
        items = sorted(self._terms.items(), key=lambda kv: (total_degree(kv[0]), kv[0]))
        return {
            "space": self.space.to_json(),
            "terms": [{"alpha": [[c, d] for c, d in a], "coeff": v} for a, v in items],
        }

    @classmethod
    def from_json(cls, data: dict | str) -> "ChaosElement":
        if isinstance(data, str):
            data = json.loads(data)
        space = GroundSpace(tuple(data["space"]))
        terms: dict[MultiIndex, float] = {}
        for t in data["terms"]:
            a = make_index(tuple(x) for x in t["alpha"])
            terms[a] = terms.get(a, 0.0) + float(t["coeff"])
        return cls(space, terms)

    # convenience wrappers
    def project(self, k: int) -> "ChaosElement":
        return project(self, k)

    def expectation(self) -> float:
        return expectation(self)

    def evaluate(self, counts) -> np.ndarray | float:
        return evaluate(self, counts)


# -- integrals and kernels ----------------------------------------------------
def integral_from_kernel(f: Kernel) -> ChaosElement:
    """Multiple integral ``I_q(f)`` of a symmetric kernel.

    Each multiset of cells ``z`` with multiplicities ``alpha`` contributes
    ``q!/alpha! * f(z)`` to the coefficient of ``B_alpha``; for kernels that
    vanish on diagonals this is ``q! f(z)`` on 0/1 multi-indices.
    """
    if not f.is_symmetric:
        raise ValueError("integral_from_kernel needs a symmetric kernel")
    q = f.order
    if q == 0:
        return ChaosElement.constant(f.space, float(f.values))
    vals = f.values
    qf = math.factorial(q)
    terms: dict[MultiIndex, float] = {}
    nz = np.nonzero(vals)
    idx = np.stack(nz, axis=1)
    if q > 1:
        keep = np.all(np.diff(idx, axis=1) >= 0, axis=1)
        idx = idx[keep]
    for z in map(tuple, idx):
        alpha = make_index((c, 1) for c in z)
        mult = 1
        for _, d in alpha:
            mult *= math.factorial(d)
        terms[alpha] = qf / mult * float(vals[z])
    return ChaosElement(f.space, terms)


def kernel_of(F: ChaosElement) -> Kernel:
    """Symmetric kernel ``f`` with ``F = I_q(f)`` for homogeneous ``F``."""
    q = F.homogeneous_grade() if len(F) else 0
    m = F.space.n_cells
    if q == 0:
        return Kernel.constant(F.space, F.terms.get(_EMPTY, 0.0))
    vals = np.zeros((m,) * q)
    qf = math.factorial(q)
    for alpha, c in F.terms.items():
        mult = 1
        cells: list[int] = []
        for cell, d in alpha:
            mult *= math.factorial(d)
            cells += [cell] * d
        v = c * mult / qf
        for perm in set(itertools.permutations(cells)):
            vals[perm] = v
    return Kernel(F.space, vals)


# -- products -----------------------------------------------------------------
def _product_terms(a: MultiIndex, b: MultiIndex, mu, c: float, out: dict) -> None:
    if not a:
        out[b] += c
        return
    if not b:
        out[a] += c
        return
    da = dict(a)
    fixed: list[tuple[int, int]] = []
    shared: list[tuple[int, tuple]] = []
    for cell, deg in b:
        other = da.pop(cell, None)
        if other is None:
            fixed.append((cell, deg))
        else:
            shared.append((cell, linearization(other, deg, mu[cell])))
    fixed.extend(da.items())
    if not shared:
        out[tuple(sorted(fixed))] += c
        return
    cells = [s[0] for s in shared]
    for choice in itertools.product(*(s[1] for s in shared)):
        coef = c
        key = list(fixed)
        for cell, (k, w) in zip(cells, choice):
            coef *= w
            if k:
                key.append((cell, k))
        out[tuple(sorted(key))] += coef


def multiply(F: ChaosElement, G: ChaosElement) -> ChaosElement:
    """Exact product, linearized cell by cell in the Charlier basis."""
    F._check(G)
    mu = F.space.intensities
    out: dict[MultiIndex, float] = defaultdict(float)
    if F is G:
        items = list(F.terms.items())
        for i, (a, ca) in enumerate(items):
            _product_terms(a, a, mu, ca * ca, out)
            for b, cb in items[i + 1:]:
                _product_terms(a, b, mu, 2.0 * ca * cb, out)
    else:
        for a, ca in F.terms.items():
            for b, cb in G.terms.items():
                _product_terms(a, b, mu, ca * cb, out)
    return ChaosElement(F.space, out)


# -- projections and moments --------------------------------------------------
def project(F: ChaosElement, k: int) -> ChaosElement:
    """Orthogonal projection ``J_k(F)`` onto the k-th chaos."""
    return ChaosElement(F.space, {a: c for a, c in F.terms.items() if total_degree(a) == k})


def expectation(F: ChaosElement) -> float:
    return F.terms.get(_EMPTY, 0.0)


def inner(F: ChaosElement, G: ChaosElement) -> float:
    """``E[F G]`` from coefficients."""
    F._check(G)
    if len(G) < len(F):
        F, G = G, F
    gt = G.terms
    return sum(c * gt[a] * F.weight(a) for a, c in F.terms.items() if a in gt)


def covariance(F: ChaosElement, G: ChaosElement) -> float:
    return inner(F, G) - expectation(F) * expectation(G)


def variance(F: ChaosElement) -> float:
    return covariance(F, F)


def apply_L(F: ChaosElement) -> ChaosElement:
    """Ornstein-Uhlenbeck generator: ``L F = -sum_k k J_k(F)``."""
    return F.map_grades(lambda k: -float(k))


def semigroup(F: ChaosElement, t: float) -> ChaosElement:
    """``P_t F = E[F] + sum_k e^{-kt} J_k(F)``."""
    if t < 0:
        raise ValueError("semigroup time must be nonnegative")
    return F.map_grades(lambda k: math.exp(-k * t))


def gamma(F: ChaosElement, G: ChaosElement) -> ChaosElement:
    """Carre du champ ``(L(FG) - F LG - G LF) / 2``."""
    FG = F.square() if F is G else multiply(F, G)
    F_LG = multiply(F, apply_L(G))
    G_LF = F_LG if F is G else multiply(G, apply_L(F))
    return (apply_L(FG) - F_LG - G_LF).scale(0.5)


def moment2(F: ChaosElement) -> float:
    return inner(F, F)


def moment4(F: ChaosElement) -> float:
    """``E[F^4] = E[(F^2)^2]``, read off the coefficients of ``F^2``."""
    F2 = F.square()
    return inner(F2, F2)


def fourth_cumulant(F: ChaosElement) -> float:
    """``E[F^4] - 3 E[F^2]^2`` (the fourth cumulant for centred ``F``)."""
    return moment4(F) - 3.0 * moment2(F) ** 2


def rho(F: ChaosElement) -> float:
    """``-4q E[F^4] + 12 E[F^2 Gamma(F,F)]`` for ``F`` in the q-th chaos."""
    q = F.homogeneous_grade()
    return -4.0 * q * moment4(F) + 12.0 * inner(F.square(), gamma(F, F))


# -- evaluation ---------------------------------------------------------------
def _compile(F: ChaosElement):
    groups: dict[int, list] = defaultdict(list)
    maxdeg = np.zeros(F.space.n_cells, dtype=int)
    for alpha, c in F.terms.items():
        groups[len(alpha)].append((alpha, c))
        for cell, d in alpha:
            maxdeg[cell] = max(maxdeg[cell], d)
    compiled = []
    for k, items in sorted(groups.items()):
        coeffs = np.array([c for _, c in items])
        cells = np.array([[cell for cell, _ in a] for a, _ in items], dtype=np.intp).reshape(len(items), k)
        degs = np.array([[d for _, d in a] for a, _ in items], dtype=np.intp).reshape(len(items), k)
        compiled.append((k, coeffs, cells, degs))
    return int(maxdeg.max(initial=0)), compiled


def evaluate(F: ChaosElement, counts) -> np.ndarray | float:
    """Value of the representative of ``F`` at observed cell counts.

    ``counts`` is a :class:`~poissonfmt.sampling.PoissonSample`, a vector of
    length ``#cells`` or an ``(n, #cells)`` array; returns a float or an
    ``(n,)`` array accordingly.
    """
    if hasattr(counts, "counts"):
        if getattr(counts, "space", F.space) != F.space:
            raise ValueError("sample and element live on different ground spaces")
        counts = counts.counts
    x = np.asarray(counts, dtype=float)
    scalar = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != F.space.n_cells:
        raise ValueError("counts do not match the number of cells")
    if F._compiled is None:
        F._compiled = _compile(F)
    D, compiled = F._compiled
    n, m = x.shape
    out = np.empty(n)
    block = max(1, _EVAL_CHUNK // (m * (D + 1)))
    for b in range(0, n, block):
        out[b:b + block] = _evaluate_block(x[b:b + block], F.space.mu, D, compiled)
    return float(out[0]) if scalar else out


def _evaluate_block(x: np.ndarray, mu: np.ndarray, D: int, compiled) -> np.ndarray:
    n = x.shape[0]
    out = np.zeros(n)
    # V[cell, degree, sample]
    V = np.stack([charlier_values(x[:, i], mu[i], D) for i in range(x.shape[1])])
    step = max(1, _EVAL_CHUNK // n)
    for k, coeffs, cells, degs in compiled:
        if k == 0:
            out += coeffs.sum()
            continue
        for s in range(0, len(coeffs), step):
            sl = slice(s, s + step)
            prod = V[cells[sl, 0], degs[sl, 0]]
            for j in range(1, k):
                prod = prod * V[cells[sl, j], degs[sl, j]]
            out += coeffs[sl] @ prod
    return out
