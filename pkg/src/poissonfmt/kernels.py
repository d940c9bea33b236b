"""Kernel tensors over a finite, atomic ground space.

A :class:`GroundSpace` is a finite list of cells carrying positive masses; a
:class:`Kernel` of order ``q`` is a dense real tensor of shape ``(m,) * q``
living in ``L^2(mu^q)``, i.e. the inner product weights every index tuple by
the product of the cell masses.
"""
from __future__ import annotations

import hashlib
import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

__all__ = [
    "GroundSpace",
    "Kernel",
    "symmetrize",
    "tensor",
    "symmetric_tensor",
    "contract",
    "inner",
    "norm",
    "contraction_identity_check",
    "ContractionIdentityReport",
]

_SYM_RTOL = 1e-12


@dataclass(frozen=True)
class GroundSpace:
    """Finite atomic measure space: ``intensities[i]`` is the mass of cell ``i``."""

    intensities: tuple[float, ...]
    cell_ids: tuple[Any, ...] = ()

    def __post_init__(self):
        lam = tuple(float(x) for x in self.intensities)
        if not lam:
            raise ValueError("a ground space needs at least one cell")
        if any(not (x > 0.0) or not math.isfinite(x) for x in lam):
            raise ValueError(f"intensities must be finite and > 0, got {lam}")
        ids = tuple(self.cell_ids) if self.cell_ids else tuple(range(len(lam)))
        if len(ids) != len(lam):
            raise ValueError("cell_ids and intensities differ in length")
        if len(set(ids)) != len(ids):
            raise ValueError("cell_ids must be unique")
        object.__setattr__(self, "intensities", lam)
        object.__setattr__(self, "cell_ids", ids)

    @classmethod
    def uniform(cls, n_cells: int, intensity: float = 1.0) -> "GroundSpace":
        return cls((float(intensity),) * int(n_cells))

    @classmethod
    def from_breakpoints(cls, t: Sequence[float]) -> "GroundSpace":
        """Cells ``[t_i, t_{i+1})`` of a strictly increasing sequence, Lebesgue masses."""
        t = np.asarray(t, dtype=float)
        gaps = np.diff(t)
        if np.any(gaps <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        return cls(tuple(gaps))

    @property
    def n_cells(self) -> int:
        return len(self.intensities)

    @property
    def mu(self) -> np.ndarray:
        return np.asarray(self.intensities, dtype=float)

    def to_json(self) -> list[float]:
        return list(self.intensities)


def _weights(space: GroundSpace, order: int) -> np.ndarray:
    """Product measure ``mu^order`` as a dense tensor."""
    mu = space.mu
    w = np.ones(())
    for _ in range(order):
        w = np.multiply.outer(w, mu)
    return w


def _check_symmetric(values: np.ndarray) -> bool:
    q = values.ndim
    if q < 2:
        return True
    scale = float(np.max(np.abs(values))) if values.size else 0.0
    atol = _SYM_RTOL * scale
    # adjacent transpositions generate S_q
    for i in range(q - 1):
        if not np.allclose(values, np.swapaxes(values, i, i + 1), rtol=0.0, atol=atol):
            return False
    return True


def _check_diagonal_free(values: np.ndarray) -> bool:
    q = values.ndim
    if q < 2:
        return True
    for i, j in itertools.combinations(range(q), 2):
        if np.any(np.diagonal(values, axis1=i, axis2=j) != 0.0):
            return False
    return True


@dataclass(frozen=True, eq=False)
class Kernel:
    """Order-``q`` tensor on ``space``; read-only once built."""

    space: GroundSpace
    values: np.ndarray
    is_symmetric: bool = field(init=False)
    vanishes_on_diagonals: bool = field(init=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float, copy=True)
        m = self.space.n_cells
        if v.ndim > 0 and any(s != m for s in v.shape):
            raise ValueError(f"kernel shape {v.shape} incompatible with {m} cells")
        if not np.all(np.isfinite(v)):
            raise ValueError("kernel values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "is_symmetric", _check_symmetric(v))
        object.__setattr__(self, "vanishes_on_diagonals", _check_diagonal_free(v))

    @property
    def order(self) -> int:
        return self.values.ndim

    @classmethod
    def constant(cls, space: GroundSpace, c: float) -> "Kernel":
        return cls(space, np.asarray(float(c)))

    @classmethod
    def from_entries(cls, space: GroundSpace, order: int, entries: dict) -> "Kernel":
        """Build from ``{index_tuple: value}``; no symmetrization is applied."""
        v = np.zeros((space.n_cells,) * order)
        for idx, val in entries.items():
            v[tuple(idx)] = val
        return cls(space, v)

    def __add__(self, other: "Kernel") -> "Kernel":
        _same(self, other)
        return Kernel(self.space, self.values + other.values)

    def __sub__(self, other: "Kernel") -> "Kernel":
        _same(self, other)
        return Kernel(self.space, self.values - other.values)

    def __mul__(self, c: float) -> "Kernel":
        return Kernel(self.space, float(c) * self.values)

    __rmul__ = __mul__

    def to_json(self) -> dict:
        return {
            "space": self.space.to_json(),
            "order": self.order,
            "values": [float(x) for x in self.values.ravel(order="C")],
        }

    @classmethod
    def from_json(cls, data: dict | str) -> "Kernel":
        if isinstance(data, str):
            data = json.loads(data)
        space = GroundSpace(tuple(data["space"]))
        order = int(data["order"])
        flat = np.asarray(data["values"], dtype=float)
        if flat.size != space.n_cells**order:
            raise ValueError("values length does not match (#cells)^order")
        return cls(space, flat.reshape((space.n_cells,) * order))

    def digest(self) -> str:
        """Short content hash used to label sample columns."""
        h = hashlib.sha256()
        h.update(json.dumps(self.space.to_json()).encode())
        h.update(str(self.order).encode())
        h.update(np.ascontiguousarray(self.values).tobytes())
        return h.hexdigest()[:12]


def _same(f: Kernel, g: Kernel, orders: bool = True) -> None:
    if f.space != g.space:
        raise ValueError("kernels live on different ground spaces")
    if orders and f.order != g.order:
        raise ValueError(f"order mismatch: {f.order} vs {g.order}")


def symmetrize(f: Kernel) -> Kernel:
    """Average of ``f`` over all permutations of its arguments."""
    q = f.order
    if q < 2 or f.is_symmetric:
        return f
    acc = np.zeros_like(f.values)
    perms = list(itertools.permutations(range(q)))
    for p in perms:
        acc += np.transpose(f.values, p)
    return Kernel(f.space, acc / len(perms))


def tensor(f: Kernel, g: Kernel) -> Kernel:
    _same(f, g, orders=False)
    return Kernel(f.space, np.multiply.outer(f.values, g.values))


def symmetric_tensor(f: Kernel, g: Kernel) -> Kernel:
    """``symmetrize(tensor(f, g))`` for symmetric ``f`` and ``g``.

    Only the ``C(p+q, p)`` ways of placing f's arguments matter, so this
    averages over shuffles instead of all ``(p+q)!`` permutations.
    """
    if not (f.is_symmetric and g.is_symmetric):
        return symmetrize(tensor(f, g))
    p, q = f.order, g.order
    t = tensor(f, g).values
    acc = np.zeros_like(t)
    shuffles = list(itertools.combinations(range(p + q), p))
    for pos in shuffles:
        rest = [i for i in range(p + q) if i not in pos]
        # axis k of t (f's k-th argument, then g's) moves to position (pos + rest)[k]
        acc += np.moveaxis(t, list(range(p + q)), list(pos) + rest)
    return Kernel(f.space, acc / len(shuffles))


def contract(f: Kernel, g: Kernel, r: int) -> Kernel:
    """r-th contraction: integrate the last ``r`` arguments of ``f`` and ``g`` against ``mu^r``.

    The output has the ``p - r`` free arguments of ``f`` followed by the
    ``q - r`` free arguments of ``g`` and is generally not symmetric.
    """
    _same(f, g, orders=False)
    p, q = f.order, g.order
    if not 0 <= r <= min(p, q):
        raise ValueError(f"contraction index r={r} outside [0, {min(p, q)}]")
    if r == 0:
        return tensor(f, g)
    fw = f.values * _weights(f.space, r)  # broadcasts over the trailing r axes
    out = np.tensordot(fw, g.values, axes=(list(range(p - r, p)), list(range(q - r, q))))
    return Kernel(f.space, out)


def inner(f: Kernel, g: Kernel) -> float:
    _same(f, g)
    return float(np.sum(f.values * g.values * _weights(f.space, f.order)))


def norm(f: Kernel) -> float:
    return math.sqrt(max(inner(f, f), 0.0))


@dataclass(frozen=True)
class ContractionIdentityReport:
    p: int
    q: int
    lhs: float
    rhs: float
    relative_gap: float
    lower_bound: float
    lower_bound_slack: float
    contraction_norms: tuple[float, ...]
    # p == q only: (2p)! <f~f, g~g> versus the contraction expansion
    inner_lhs: float | None = None
    inner_rhs: float | None = None
    inner_relative_gap: float | None = None


def _rel_gap(a: float, b: float) -> float:
    scale = max(abs(a), abs(b))
    return 0.0 if scale == 0.0 else abs(a - b) / scale


def contraction_identity_check(f: Kernel, g: Kernel) -> ContractionIdentityReport:
    """Evaluate both sides of the product-norm identity for symmetric ``f``, ``g``.

    Left: ``(p+q)! ||sym(f (x) g)||^2``. Right: ``p! q! sum_r C(p,r) C(q,r) ||f (x)_r g||^2``.
    """
    if not (f.is_symmetric and g.is_symmetric):
        raise ValueError("contraction identity needs symmetric kernels")
    p, q = f.order, g.order
    lhs = math.factorial(p + q) * norm(symmetric_tensor(f, g)) ** 2
    cnorms = tuple(norm(contract(f, g, r)) for r in range(min(p, q) + 1))
    rhs = math.factorial(p) * math.factorial(q) * sum(
        math.comb(p, r) * math.comb(q, r) * c**2 for r, c in enumerate(cnorms)
    )
    fg = inner(f, g) if p == q else 0.0
    lower = math.factorial(p) * math.factorial(q) * (norm(f) ** 2 * norm(g) ** 2 + fg**2)
    report = dict(
        p=p, q=q, lhs=lhs, rhs=rhs, relative_gap=_rel_gap(lhs, rhs),
        lower_bound=lower, lower_bound_slack=rhs - lower, contraction_norms=cnorms,
    )
    if p == q:
        ff = symmetric_tensor(f, f)
        gg = symmetric_tensor(g, g)
        ilhs = math.factorial(2 * p) * inner(ff, gg)
        irhs = 2 * math.factorial(p) ** 2 * fg**2 + sum(
            math.factorial(p) ** 2 * math.comb(p, r) ** 2 * inner(contract(f, g, r), contract(g, f, r))
            for r in range(1, p)
        )
        report.update(inner_lhs=ilhs, inner_rhs=irhs, inner_relative_gap=_rel_gap(ilhs, irhs))
    return ContractionIdentityReport(**report)
