"""Empirical distances, moment estimators and Gaussian reference samples."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .bounds import CovMatrix, SmoothnessSpec
from .rng import blocks, stream

__all__ = [
    "SampleSet",
    "wasserstein1_1d",
    "wasserstein1_1d_se",
    "TestFunction",
    "default_test_family",
    "smooth_test_distance",
    "jackknife_se",
    "moment_estimators",
    "sample_gaussian",
    "read_samples_csv",
]


@dataclass(frozen=True, eq=False)
class SampleSet:
    """``n x d`` sample matrix plus the seed and free-form provenance."""

    data: np.ndarray
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        a = np.asarray(self.data, dtype=float)
        if a.ndim == 1:
            a = a[:, None]
        if a.ndim != 2:
            raise ValueError("samples must be a vector or a matrix")
        if a.shape[0] < 2:
            raise ValueError("need at least two replications")
        if not np.all(np.isfinite(a)):
            raise ValueError("samples contain non-finite entries")
        object.__setattr__(self, "data", a)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]

    def column(self, j: int = 0) -> np.ndarray:
        return self.data[:, j]


def _as_set(x) -> SampleSet:
    return x if isinstance(x, SampleSet) else SampleSet(x)


def wasserstein1_1d(a, b, seed: int = 0) -> float:
    """Exact W1 between two empirical laws via the sorted coupling.

    When sizes differ the larger sample is subsampled without replacement
    (deterministically from ``seed``) down to the smaller size.
    """
    a, b = np.asarray(_vector(a), dtype=float), np.asarray(_vector(b), dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValueError("empty sample")
    if a.size != b.size:
        rng = stream(seed, "w1-resample")
        if a.size > b.size:
            a = rng.choice(a, size=b.size, replace=False)
        else:
            b = rng.choice(b, size=a.size, replace=False)
    return float(np.mean(np.abs(np.sort(a) - np.sort(b))))


def wasserstein1_1d_se(a, b, groups: int = 20, seed: int = 0) -> tuple[float, float]:
    """W1 with a delete-a-group jackknife SE (groups removed from both samples)."""
    a, b = _vector(a), _vector(b)
    if a.size != b.size:
        rng = stream(seed, "w1-resample")
        if a.size > b.size:
            a = rng.choice(a, size=b.size, replace=False)
        else:
            b = rng.choice(b, size=a.size, replace=False)
    w = wasserstein1_1d(a, b)
    n = a.size
    g = min(groups, n // 2)
    if g < 2:
        return w, float("nan")
    loo = []
    for idx in np.array_split(np.arange(n), g):
        keep = np.ones(n, dtype=bool)
        keep[idx] = False
        loo.append(wasserstein1_1d(a[keep], b[keep]))
    loo = np.array(loo)
    return w, float(math.sqrt((g - 1) / g * np.sum((loo - loo.mean()) ** 2)))


def _vector(x) -> np.ndarray:
    if isinstance(x, SampleSet):
        if x.d != 1:
            raise ValueError("one-dimensional sample set expected")
        return x.column(0)
    x = np.asarray(x, dtype=float)
    if x.ndim == 2 and x.shape[1] == 1:
        x = x[:, 0]
    if x.ndim != 1:
        raise ValueError("one-dimensional sample expected")
    return x


def jackknife_se(values: np.ndarray, groups: int = 20) -> float:
    """Grouped (delete-a-group) jackknife SE of the mean of ``values``."""
    v = np.asarray(values, dtype=float)
    n = v.size
    g = min(groups, n)
    if g < 2:
        return 0.0
    idx = np.array_split(np.arange(n), g)
    sums = np.array([v[i].sum() for i in idx])
    counts = np.array([len(i) for i in idx])
    loo = (sums.sum() - sums) / (n - counts)
    return float(math.sqrt((g - 1) / g * np.sum((loo - loo.mean()) ** 2)))


@dataclass(frozen=True)
class TestFunction:
    """``cos(<u, x>)`` or ``sin(<u, x>)``; derivative Lipschitz constants are ``|u|^k``."""

    __test__ = False  # not a pytest class despite the name

    u: tuple[float, ...]
    kind: str  # "cos" or "sin"

    @property
    def name(self) -> str:
        return f"{self.kind}(" + ",".join(f"{x:.6g}" for x in self.u) + ")"

    @property
    def smoothness(self) -> SmoothnessSpec:
        r = float(np.linalg.norm(self.u))
        return SmoothnessSpec(M1=r, M2=r**2, M3=r**3, M2_hs=r**2)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        s = np.atleast_2d(x) @ np.asarray(self.u)
        return np.cos(s) if self.kind == "cos" else np.sin(s)


def default_test_family(d: int, radii: Sequence[float] = (0.5, 1.0, 2.0)) -> list[TestFunction]:
    """Coordinate axes plus the normalized all-ones direction, at each radius."""
    dirs = [np.eye(d)[i] for i in range(d)]
    if d > 1:
        dirs.append(np.ones(d) / math.sqrt(d))
    return [
        TestFunction(tuple(float(x) for x in r * v), kind)
        for r in radii for v in dirs for kind in ("cos", "sin")
    ]


@dataclass(frozen=True)
class GapRow:
    function: TestFunction
    mean_sample: float
    mean_gauss: float
    gap: float
    se: float

    def as_dict(self) -> dict:
        m = self.function.smoothness
        return {"function": self.function.name, "M1": m.M1, "M2": m.M2, "M3": m.M3,
                "mean_sample": self.mean_sample, "mean_gauss": self.mean_gauss, "gap": self.gap, "se": self.se}


def smooth_test_distance(a, gaussian: CovMatrix, family: Sequence[TestFunction] | None = None,
                         n_gauss: int | None = None, seed: int = 0, groups: int = 20) -> list[GapRow]:
    """Per test function ``|mean g(a) - mean g(N)|`` with jackknife SEs (independent samples)."""
    a = _as_set(a)
    if a.d != gaussian.d:
        raise ValueError("sample dimension differs from the covariance dimension")
    family = default_test_family(a.d) if family is None else list(family)
    for g in family:
        if len(g.u) != a.d:
            raise ValueError("test function dimension mismatch")
    n_gauss = a.n if n_gauss is None else int(n_gauss)
    z = sample_gaussian(gaussian, n_gauss, seed).data
    rows = []
    for g in family:
        ga, gz = g(a.data), g(z)
        ma, mz = float(ga.mean()), float(gz.mean())
        se = math.hypot(jackknife_se(ga, groups), jackknife_se(gz, groups))
        rows.append(GapRow(g, ma, mz, abs(ma - mz), se))
    return rows


def _kappa4_influence(x: np.ndarray) -> tuple[float, float, float, float, np.ndarray]:
    c = x - x.mean()
    m2, m3, m4 = (np.mean(c**k) for k in (2, 3, 4))
    # influence of m4 - 3 m2^2, centring included
    inf = (c**4 - m4) - 4 * m3 * c - 6 * m2 * (c**2 - m2)
    return float(m2), float(m3), float(m4), float(m4 - 3 * m2**2), inf


def moment_estimators(a) -> dict:
    """Means, covariance and per-coordinate fourth moments / cumulants with SEs.

    Fourth moments are central. The kappa4 SE is the delta-method SE from
    the empirical influence function; it needs ``n >= 8``.
    """
    a = _as_set(a)
    X = a.data
    n = a.n
    mean = X.mean(axis=0)
    cov = np.cov(X, rowvar=False, ddof=1).reshape(a.d, a.d)
    out = {"n": n, "mean": mean, "mean_se": X.std(axis=0, ddof=1) / math.sqrt(n), "covariance": cov}
    m4s, m4se, k4s, k4se = [], [], [], []
    for j in range(a.d):
        m2, m3, m4, k4, inf = _kappa4_influence(X[:, j])
        c4 = (X[:, j] - mean[j]) ** 4
        m4s.append(m4)
        k4s.append(k4)
        if n >= 8:
            m4se.append(float(c4.std(ddof=1) / math.sqrt(n)))
            k4se.append(float(inf.std(ddof=1) / math.sqrt(n)))
        else:
            m4se.append(float("nan"))
            k4se.append(float("nan"))
    out.update(fourth_moment=np.array(m4s), fourth_moment_se=np.array(m4se),
               kappa4=np.array(k4s), kappa4_se=np.array(k4se))
    return out


def sample_gaussian(Sigma: CovMatrix, n: int, seed: int) -> SampleSet:
    """``n`` draws of ``N(0, Sigma)`` via a symmetric square-root factor."""
    if not isinstance(Sigma, CovMatrix):
        Sigma = CovMatrix(Sigma)
    if not Sigma.is_psd:
        raise ValueError("covariance is not positive semidefinite")
    w, v = np.linalg.eigh(Sigma.matrix)
    w = np.where(w > EIG_CUT * max(Sigma.op_norm, 1e-300), w, 0.0)
    factor = v * np.sqrt(w)
    out = np.empty((int(n), Sigma.d))
    for b, sl in blocks(int(n)):
        out[sl] = stream(seed, "gaussian", b).standard_normal((sl.stop - sl.start, Sigma.d)) @ factor.T
    return SampleSet(out, seed, {"source": "gaussian"})


EIG_CUT = 1e-12


def read_samples_csv(path: str | Path) -> tuple[list[str], SampleSet]:
    """Read a sample CSV written by :func:`poissonfmt.sampling.write_samples_csv`."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError("empty CSV")
    header, body = rows[0], rows[1:]
    seeds = {h.rsplit("_seed", 1)[-1] for h in header if "_seed" in h}
    seed = int(seeds.pop()) if len(seeds) == 1 else None
    return header, SampleSet(np.array(body, dtype=float).reshape(len(body), len(header)), seed,
                             {"source": str(path)})
