"""Explicit normal-approximation bounds driven by fourth cumulants."""
from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from . import chaos
from .kernels import Kernel, contract, norm

__all__ = [
    "CovMatrix",
    "SmoothnessSpec",
    "BoundReport",
    "KAPPA4_NEG_TOL",
    "univariate_bound",
    "multivariate_constants",
    "multivariate_bound",
    "plugin_bound_1d",
    "plugin_constants_md",
    "plugin_bound_md",
    "transfer_principle_check",
    "gaussian_fourth_moment",
]

KAPPA4_NEG_TOL = 1e-9
SYM_TOL = 1e-12
EIG_FLOOR = 1e-12


class CovMatrix:
    """Symmetric covariance matrix with cached spectral functionals."""

    def __init__(self, matrix, orders: Sequence[int] | None = None):
        a = np.array(matrix, dtype=float, ndmin=2)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("covariance must be a square matrix")
        if not np.all(np.isfinite(a)):
            raise ValueError("covariance has non-finite entries")
        scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
        if np.max(np.abs(a - a.T), initial=0.0) > SYM_TOL * scale:
            raise ValueError("covariance is not symmetric")
        a = 0.5 * (a + a.T)
        a.setflags(write=False)
        self.matrix = a
        self.orders = None if orders is None else tuple(int(q) for q in orders)
        if self.orders is not None and len(self.orders) != self.d:
            raise ValueError("one order per coordinate expected")

    @property
    def d(self) -> int:
        return self.matrix.shape[0]

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix))

    @property
    def op_norm(self) -> float:
        return float(np.max(np.abs(self.eigenvalues)))

    @property
    def hs_norm(self) -> float:
        return float(np.linalg.norm(self.matrix))

    @property
    def min_eigenvalue(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def is_psd(self) -> bool:
        return self.min_eigenvalue >= -EIG_FLOOR * max(self.op_norm, 1e-300)

    @property
    def is_positive_definite(self) -> bool:
        return self.min_eigenvalue > EIG_FLOOR * self.op_norm

    @cached_property
    def inv_sqrt(self) -> np.ndarray:
        if not self.is_positive_definite:
            raise ValueError("covariance is not positive definite; Sigma^{-1/2} is undefined")
        w, v = np.linalg.eigh(self.matrix)
        return (v / np.sqrt(w)) @ v.T

    @property
    def inv_sqrt_op_norm(self) -> float:
        if not self.is_positive_definite:
            raise ValueError("covariance is not positive definite; Sigma^{-1/2} is undefined")
        return float(1.0 / math.sqrt(self.min_eigenvalue))

    def block_diagonal_violation(self) -> float:
        """Largest |Sigma_ij| over pairs with different orders (0 when orders are unknown)."""
        if self.orders is None:
            return 0.0
        q = np.array(self.orders)
        mask = q[:, None] != q[None, :]
        return float(np.max(np.abs(self.matrix[mask]), initial=0.0))

    def to_json(self) -> dict:
        return {"matrix": self.matrix.tolist(), "orders": None if self.orders is None else list(self.orders)}


@dataclass(frozen=True)
class SmoothnessSpec:
    """Lipschitz constants of a test function and its first two derivatives."""

    M1: float = 0.0
    M2: float = 0.0
    M3: float = 0.0
    M2_hs: float | None = None

    def __post_init__(self):
        for name in ("M1", "M2", "M3"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be a finite nonnegative number")
        if self.M2_hs is not None and self.M2_hs < 0:
            raise ValueError("M2_hs must be nonnegative")

    def check_dimension(self, d: int) -> None:
        if self.M2_hs is not None and self.M2_hs > math.sqrt(d) * self.M2 * (1 + 1e-12):
            raise ValueError("Hessian HS constant cannot exceed sqrt(d) * M2")


@dataclass
class BoundReport:
    constants: dict[str, float]
    terms: list[dict]
    total: float
    inputs: dict = field(default_factory=dict)

    @property
    def inputs_digest(self) -> str:
        blob = json.dumps(self.inputs, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def to_json(self) -> dict:
        return {
            "constants": dict(sorted(self.constants.items())),
            "terms": self.terms,
            "total": self.total,
            "inputs_digest": self.inputs_digest,
        }


def _clean_kappa4(k4: float, sigma2: float = 1.0) -> float:
    k4 = float(k4)
    if k4 >= 0:
        return k4
    if k4 >= -KAPPA4_NEG_TOL * max(sigma2, 1e-300) ** 2:
        warnings.warn(f"fourth cumulant {k4:.3e} clamped to 0", RuntimeWarning, stacklevel=3)
        return 0.0
    raise ValueError(f"fourth cumulant {k4:.6g} is negative; a fixed-chaos element cannot have kappa4 < 0")


def univariate_bound(q: int, sigma2: float, kappa4: float) -> tuple[float, float]:
    """Wasserstein bounds ``(b1, b2)`` for a q-th chaos element with variance ``sigma2``."""
    if q < 1 or int(q) != q:
        raise ValueError("q must be a positive integer")
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    s = math.sqrt(sigma2)
    r = math.sqrt(_clean_kappa4(kappa4, sigma2))
    b1 = ((2 * q - 1) / (s * q * math.sqrt(2 * math.pi)) + 2.0 / (3.0 * s) * math.sqrt((4 * q - 3) / q)) * r
    b2 = (math.sqrt(2.0 / math.pi) / s + 4.0 / (3.0 * s)) * r
    return b1, b2


def multivariate_constants(q1: int, qd: int, d: int, Sigma: CovMatrix, spec: SmoothnessSpec,
                           positive_definite: bool | None = None) -> dict[str, float]:
    """A2 and B3 always; A1 and B2 as well when Sigma is positive definite.

    Pass ``positive_definite=True`` to insist on A1/B2 (raises otherwise).
    """
    if not 1 <= q1 <= qd:
        raise ValueError("orders must satisfy 1 <= q1 <= qd")
    if Sigma.d != d:
        raise ValueError("dimension mismatch between d and Sigma")
    spec.check_dimension(d)
    tr = Sigma.trace
    A2 = (2 * qd - 1) * math.sqrt(2 * d) / (4 * q1) * spec.M2
    out = {"A2": A2, "B3": A2 + 2 * qd * math.sqrt(d * tr) / (9 * q1) * spec.M3}
    want = Sigma.is_positive_definite if positive_definite is None else positive_definite
    if want:
        n = Sigma.inv_sqrt_op_norm
        A1 = (2 * qd - 1) * n / (q1 * math.sqrt(math.pi)) * spec.M1
        out["A1"] = A1
        out["B2"] = A1 + qd * math.sqrt(2 * math.pi) * n * math.sqrt(tr) / (6 * q1) * spec.M2
    return out


def multivariate_bound(
    orders: Sequence[int],
    Sigma: CovMatrix,
    kappa4s: Sequence[float],
    fourth_moments: Sequence[float],
    spec: SmoothnessSpec,
    variant: str = "C3",
) -> BoundReport:
    """Bound on ``|E g(F) - E g(N)|`` for a chaos vector, coordinates sorted by order.

    ``C3`` uses (A2, B3), ``C2`` uses (A1, B2) and needs Sigma positive definite;
    ``same_chaos`` drops the cross term and requires equal orders (C3 constants).
    """
    orders = [int(q) for q in orders]
    d = len(orders)
    if not (len(kappa4s) == len(fourth_moments) == Sigma.d == d) or d == 0:
        raise ValueError("orders, kappa4s, fourth_moments and Sigma must agree in dimension")
    if variant not in ("C3", "C2", "same_chaos"):
        raise ValueError(f"unknown variant {variant!r}")
    if orders != sorted(orders):
        raise ValueError("coordinates must be sorted by chaos order")
    if variant == "same_chaos" and len(set(orders)) != 1:
        raise ValueError("same_chaos variant requires all orders equal")
    diag = np.diag(Sigma.matrix)
    k4 = [_clean_kappa4(k, s) for k, s in zip(kappa4s, diag)]
    m4 = [float(m) for m in fourth_moments]
    if any(m < 0 for m in m4):
        raise ValueError("fourth moments must be nonnegative")
    consts = multivariate_constants(orders[0], orders[-1], d, Sigma, spec, positive_definite=(variant == "C2"))
    lead, cross = ("B2", "A1") if variant == "C2" else ("B3", "A2")
    sum_sqrt = sum(math.sqrt(k) for k in k4)
    t1 = consts[lead] * sum_sqrt
    terms = [{"name": f"{lead}*sum_sqrt_kappa4", "value": t1}]
    total = t1
    if variant != "same_chaos":
        t2 = consts[cross] * sum(m ** 0.25 for m in m4[:-1]) * sum(k ** 0.25 for k in k4[1:])
        terms.append({"name": f"{cross}*cross", "value": t2})
        total += t2
    inputs = {
        "orders": orders, "Sigma": Sigma.matrix.tolist(), "kappa4s": k4, "fourth_moments": m4,
        "spec": [spec.M1, spec.M2, spec.M3], "variant": variant,
    }
    return BoundReport({k: consts[k] for k in (lead, cross)}, terms, total, inputs)


def plugin_bound_1d(lambda_: float, meanAbsS: float, meanS: float, varY: float, rhoY: float) -> float:
    """Exchangeable-pair Wasserstein bound for a one-dimensional statistic."""
    if not lambda_ > 0:
        raise ValueError("lambda must be positive")
    if not varY > 0:
        raise ValueError("Var(Y) must be positive")
    if rhoY < 0:
        raise ValueError("rho(Y) must be nonnegative")
    if meanAbsS < 0:
        raise ValueError("E|S| must be nonnegative")
    if 2 * lambda_ + meanS < 0:
        raise ValueError("2*lambda + E[S] must be nonnegative")
    return (math.sqrt(varY) / (lambda_ * math.sqrt(2 * math.pi)) * meanAbsS
            + math.sqrt((2 * lambda_ + meanS) * varY) / (3 * lambda_) * math.sqrt(rhoY))


def plugin_constants_md(Lambda, Sigma: CovMatrix, spec: SmoothnessSpec, variant: str = "C3") -> dict[str, float]:
    lam = np.asarray(Lambda, dtype=float)
    if lam.ndim == 1:
        lam = np.diag(lam)
    if lam.shape != (Sigma.d, Sigma.d):
        raise ValueError("Lambda and Sigma dimensions differ")
    if np.any(lam - np.diag(np.diag(lam))):
        raise ValueError("Lambda must be diagonal")
    if np.any(np.diag(lam) <= 0):
        raise ValueError("Lambda must be a positive diagonal matrix")
    inv = float(np.max(1.0 / np.diag(lam)))
    d = Sigma.d
    if variant == "C3":
        return {"Theta1": inv * spec.M2 * math.sqrt(d) / 4.0, "Theta2": math.sqrt(d) * spec.M3 * inv / 18.0}
    if variant == "C2":
        s = Sigma.inv_sqrt_op_norm
        return {"K1": spec.M1 * inv * s / math.sqrt(2 * math.pi), "K2": math.sqrt(2 * math.pi) * spec.M2 * inv * s / 24.0}
    raise ValueError(f"unknown variant {variant!r}")


def plugin_bound_md(Lambda, Sigma: CovMatrix, meanHS_S: float, meanS_diag: Sequence[float],
                    rhos: Sequence[float], spec: SmoothnessSpec, variant: str = "C3") -> float:
    """Multivariate exchangeable-pair bound with a diagonal Lambda."""
    c = plugin_constants_md(Lambda, Sigma, spec, variant)
    c1, c2 = c.values()
    lam = np.asarray(Lambda, dtype=float)
    lam = np.diag(lam) if lam.ndim == 2 else lam
    rhos = np.asarray(rhos, dtype=float)
    meanS_diag = np.asarray(meanS_diag, dtype=float)
    if rhos.shape != (Sigma.d,) or meanS_diag.shape != (Sigma.d,):
        raise ValueError("one rho and one E[S_ii] per coordinate expected")
    if np.any(rhos < 0):
        raise ValueError("rho values must be nonnegative")
    if meanHS_S < 0:
        raise ValueError("E||S||_HS must be nonnegative")
    inside = float(np.sum(2 * lam * np.diag(Sigma.matrix) + meanS_diag))
    if inside < 0:
        raise ValueError("sum of 2 Lambda_ii Sigma_ii + E S_ii must be nonnegative")
    return c1 * meanHS_S + c2 * math.sqrt(inside) * math.sqrt(float(rhos.sum()))


def gaussian_fourth_moment(Sigma: CovMatrix) -> float:
    """``E||N||^4`` for ``N ~ N(0, Sigma)``."""
    s = Sigma.matrix
    dg = np.diag(s)
    return float(np.sum(np.outer(dg, dg) + 2 * s**2))


@dataclass
class TransferRow:
    index: int
    order: int
    norm2: float
    kappa4: float
    contraction_norms: list[float]
    weighted_sum: float

    @property
    def slack(self) -> float:
        return self.kappa4 - self.weighted_sum

    @property
    def ok(self) -> bool:
        return self.slack >= -1e-9 * max(abs(self.kappa4), abs(self.weighted_sum), 1e-300)


@dataclass
class TransferReport:
    rows: list[TransferRow]
    tol: float

    @property
    def inequality_ok(self) -> bool:
        return all(r.ok for r in self.rows)

    @property
    def kappa4_vanishes(self) -> bool:
        return bool(self.rows) and self.rows[-1].kappa4 <= self.tol

    @property
    def contractions_vanish(self) -> bool:
        if not self.rows:
            return True
        p = self.rows[-1].order
        return all(c <= math.sqrt(max(self.tol, 0.0)) / math.factorial(p) for c in self.rows[-1].contraction_norms)

    @property
    def contractions_decrease(self) -> bool:
        for a, b in zip(self.rows, self.rows[1:]):
            if any(y > x * (1 + 1e-9) + 1e-15 for x, y in zip(a.contraction_norms, b.contraction_norms)):
                return False
        return True

    @property
    def implication_ok(self) -> bool:
        """kappa4 -> 0 forces every contraction to 0 (vacuous when kappa4 does not vanish)."""
        return (not self.kappa4_vanishes) or self.contractions_vanish

    @property
    def ok(self) -> bool:
        return self.inequality_ok and self.implication_ok

    def to_json(self) -> dict:
        return {
            "rows": [
                {"index": r.index, "order": r.order, "norm2": r.norm2, "kappa4": r.kappa4,
                 "contraction_norms": r.contraction_norms, "weighted_sum": r.weighted_sum, "ok": r.ok}
                for r in self.rows
            ],
            "tol": self.tol,
            "inequality_ok": self.inequality_ok,
            "implication_ok": self.implication_ok,
        }


def transfer_principle_check(f_seq: Sequence[Kernel], tol: float = 1e-2) -> TransferReport:
    """Exact kappa4 and contraction norms along a kernel sequence.

    For each kernel checks ``p!^2 sum_r C(p,r)^2 ||f (x)_r f||^2 <= kappa4(I_p(f))``.
    ``tol`` is the level below which the final kappa4 counts as vanished.
    """
    rows = []
    for i, f in enumerate(f_seq):
        if not f.is_symmetric or not f.vanishes_on_diagonals:
            raise ValueError("transfer check needs symmetric, diagonal-free kernels")
        p = f.order
        F = chaos.integral_from_kernel(f)
        k4 = chaos.fourth_cumulant(F) if p >= 1 else 0.0
        cn = [norm(contract(f, f, r)) for r in range(1, p)]
        ws = sum(math.factorial(p) ** 2 * math.comb(p, r) ** 2 * c**2 for r, c in zip(range(1, p), cn))
        rows.append(TransferRow(i, p, math.factorial(p) * norm(f) ** 2, k4, cn, ws))
    return TransferReport(rows, tol)
