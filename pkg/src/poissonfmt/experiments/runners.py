"""Experiment runners.  Each returns a :class:`Report` of rows and named checks.

Every row carries exact quantities, Monte Carlo quantities with SEs, the
applicable bound and a boolean ``verdict``.  Grid points run in a thread
pool but are seeded by their grid key and assembled in grid order, so the
output does not depend on the number of threads.
"""
from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .. import bounds, chaos, lemmas, sampling, stats
from ..chaos import ChaosElement
from ..families import kernel_family_cycle, kernel_family_signed, kernel_family_spread, normalize, random_element, random_kernel
from ..kernels import GroundSpace, Kernel, contract, contraction_identity_check, norm
from ..rng import derive_seed, stream
from .schema import ExperimentSpec

__all__ = ["Report", "RUNNERS", "run_univariate_fmt", "run_multivariate_pt", "run_transfer",
           "run_universality", "run_lemma_sweep", "run_pair_limits"]


@dataclass
class Report:
    kind: str
    rows: list[dict] = field(default_factory=list)
    checks: list[dict] = field(default_factory=list)
    samples: dict[str, tuple[np.ndarray, list[Kernel], int]] = field(default_factory=dict)

    def check(self, name: str, verdict: bool, **detail) -> None:
        self.checks.append({"name": name, "verdict": bool(verdict), **detail})

    @property
    def verdict(self) -> bool:
        return all(r.get("verdict", True) for r in self.rows) and all(c["verdict"] for c in self.checks)


def _pmap(fn: Callable, items: Sequence, threads: int) -> list:
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _family(name: str, q: int, n: int, intensity, seed: int = 0, step: int = 1) -> Kernel:
    if name == "spread":
        return kernel_family_spread(q, n, intensity)
    if name == "cycle":
        return kernel_family_cycle(q, n, intensity, step=step)
    if name == "signed":
        return kernel_family_signed(q, n, intensity, seed=seed)
    raise ValueError(f"unknown kernel family {name!r}")


def _gauss1(sigma2: float, n: int, seed: int) -> np.ndarray:
    return stats.sample_gaussian(bounds.CovMatrix([[sigma2]]), n, seed).data[:, 0]


def _decreasing_within_noise(vals: Sequence[float], ses: Sequence[float], window: float) -> bool:
    return all(b <= a + window * math.hypot(sa, sb) for a, b, sa, sb in zip(vals, vals[1:], ses, ses[1:]))


# -- univariate ----------------------------------------------------------------------------
def run_univariate_fmt(spec: ExperimentSpec, threads: int = 1) -> Report:
    p = spec.params
    q, window = p["q"], p["se_window"]
    rep = Report(spec.kind)

    def point(n: int) -> tuple[dict, np.ndarray, Kernel, int]:
        f = _family(p["family"], q, n, p["intensity"], p["family_seed"])
        F = chaos.integral_from_kernel(f)
        sigma2, k4 = chaos.variance(F), chaos.fourth_cumulant(F)
        b1, b2 = bounds.univariate_bound(q, sigma2, k4)
        seed = derive_seed(spec.seed, "univariate", n)
        x = chaos.evaluate(F, sampling.sample_measure(f.space, seed, p["samples"]).counts)
        w1, se = stats.wasserstein1_1d_se(x, _gauss1(sigma2, p["samples"], derive_seed(seed, "reference")))
        row = {
            "n": n, "q": q, "exact_sigma2": sigma2, "exact_kappa4": k4, "bound_b1": b1, "bound_b2": b2,
            "mc_w1": w1, "mc_w1_se": se, "samples": p["samples"], "verdict": w1 <= b1 + window * se,
        }
        return row, x, f, seed

    for row, x, f, seed in _pmap(point, p["n_grid"], threads):
        rep.rows.append(row)
        if p["write_samples"]:
            rep.samples[f"n{row['n']}"] = (x[:, None], [f], seed)
    if len(rep.rows) > 1:
        w = [r["mc_w1"] for r in rep.rows]
        s = [r["mc_w1_se"] for r in rep.rows]
        rep.check("w1_decreasing", _decreasing_within_noise(w, s, window), values=w)
    return rep


# -- multivariate ----------------------------------------------------------------------------
def _coordinate(c: dict, n: int, intensity) -> Kernel:
    f = None
    for comp in c["components"]:
        g = _family(comp["family"], c["q"], n, intensity, comp.get("seed", 0), comp.get("step", 1))
        g = g * comp.get("weight", 1.0)
        f = g if f is None else f + g
    return normalize(f)


def _bound_rows(prefix: str, gaps, orders, Sigma, k4, m4, variants) -> list[dict]:
    rows = []
    for g in gaps:
        sm = g.function.smoothness
        row = {"config": prefix, **g.as_dict()}
        for v in variants:
            row[f"bound_{v}"] = bounds.multivariate_bound(orders, Sigma, k4, m4, sm, v).total
        row["verdict"] = g.gap <= row["bound_C3"] if "bound_C3" in row else g.gap <= row["bound_same_chaos"]
        rows.append(row)
    return rows


def run_multivariate_pt(spec: ExperimentSpec, threads: int = 1) -> Report:
    p = spec.params
    rep = Report(spec.kind)
    n, intensity = p["n_cells"], p["intensity"]
    coords = sorted(p["coordinates"], key=lambda c: c["q"])
    kernels = [_coordinate(c, n, intensity) for c in coords]
    Fs = [chaos.integral_from_kernel(f) for f in kernels]
    orders = [f.order for f in kernels]
    d = len(Fs)
    Sigma = bounds.CovMatrix([[chaos.covariance(Fs[i], Fs[j]) for j in range(d)] for i in range(d)], orders)
    k4 = [chaos.fourth_cumulant(F) for F in Fs]
    m4 = [chaos.moment4(F) for F in Fs]
    viol = Sigma.block_diagonal_violation()
    rep.check("block_diagonal_exact", viol <= 1e-12, max_cross_order_entry=viol)
    rep.check("covariance_psd", Sigma.is_psd, min_eigenvalue=Sigma.min_eigenvalue)
    for i, F in enumerate(Fs):
        rep.rows.append({"config": "coordinate", "coordinate": i, "q": orders[i], "kernel": kernels[i].digest(),
                         "exact_sigma2": Sigma.matrix[i, i], "exact_kappa4": k4[i], "exact_E4": m4[i],
                         "verdict": k4[i] >= -1e-9})

    seed = derive_seed(spec.seed, "multivariate")
    counts = sampling.sample_measure(kernels[0].space, seed, p["samples"]).counts
    X = np.column_stack(_pmap(lambda F: chaos.evaluate(F, counts), Fs, threads))
    if p["write_samples"]:
        rep.samples["vector"] = (X, kernels, seed)
    variants = ["C3"] + (["C2"] if Sigma.is_positive_definite else []) + (
        ["same_chaos"] if len(set(orders)) == 1 else [])
    gaps = stats.smooth_test_distance(X, Sigma, stats.default_test_family(d, p["radii"]),
                                      seed=derive_seed(seed, "reference"))
    rep.rows.extend(_bound_rows("full", gaps, orders, Sigma, k4, m4, variants))

    # equal-order sub-vectors: same-chaos variant and the A2 constant
    for q in sorted(set(orders)):
        idx = [i for i, o in enumerate(orders) if o == q]
        if len(idx) < 2:
            continue
        sub = bounds.CovMatrix(Sigma.matrix[np.ix_(idx, idx)], [q] * len(idx))
        a2 = bounds.multivariate_constants(q, q, len(idx), sub, bounds.SmoothnessSpec(M2=1.0))["A2"]
        expected = (2 * q - 1) * math.sqrt(2 * len(idx)) / (4 * q)
        rep.check(f"A2_subvector_q{q}", abs(a2 - expected) <= 1e-12 * expected, A2=a2, expected=expected)
        sub_vars = ["C3", "same_chaos"] + (["C2"] if sub.is_positive_definite else [])
        sub_gaps = stats.smooth_test_distance(X[:, idx], sub, stats.default_test_family(len(idx), p["radii"]),
                                              seed=derive_seed(seed, "reference", q))
        rep.rows.extend(_bound_rows(f"subvector_q{q}", sub_gaps, [q] * len(idx), sub,
                                    [k4[i] for i in idx], [m4[i] for i in idx], sub_vars))
    return rep


# -- transfer ---------------------------------------------------------------------------------
def run_transfer(spec: ExperimentSpec, threads: int = 1) -> Report:
    p = spec.params
    q, window = p["q"], p["se_window"]
    rep = Report(spec.kind)
    kernels = [_family(p["family"], q, n, p["intensity"], p["family_seed"]) for n in p["n_grid"]]
    tr = bounds.transfer_principle_check(kernels)

    def gauss_side(i: int) -> tuple[float, float]:
        f = kernels[i]
        var = math.factorial(q) * float(np.sum(f.values**2))
        seed = derive_seed(spec.seed, "transfer", p["n_grid"][i])
        x = sampling.sample_homogeneous_sums([f], "gaussian", p["samples"], seed)[:, 0]
        return stats.wasserstein1_1d_se(x, _gauss1(var, p["samples"], derive_seed(seed, "reference")))

    w1s = _pmap(gauss_side, list(range(len(kernels))), threads)
    for n, row, (w1, se) in zip(p["n_grid"], tr.rows, w1s):
        rep.rows.append({
            "n": n, "q": q, "exact_kappa4": row.kappa4, "exact_contraction_norms": row.contraction_norms,
            "exact_weighted_sum": row.weighted_sum, "slack": row.slack,
            "gaussian_w1": w1, "gaussian_w1_se": se, "verdict": row.ok,
        })
    if rep.rows:
        k = [r["exact_kappa4"] for r in rep.rows]
        rep.check("kappa4_decreasing", all(b < a for a, b in zip(k, k[1:])), values=k)
        rep.check("contractions_decreasing", tr.contractions_decrease)
        rep.check("implication", tr.implication_ok)
        w = [r["gaussian_w1"] for r in rep.rows]
        rep.check("gaussian_w1_decreasing", _decreasing_within_noise(w, [r["gaussian_w1_se"] for r in rep.rows],
                                                                     window), values=w)
        rep.check("gaussian_w1_final", w[-1] <= p["w1_final_max"], value=w[-1], threshold=p["w1_final_max"])
    return rep


# -- universality -----------------------------------------------------------------------------
def _poisson_space(n: int, spacing: float) -> GroundSpace:
    return GroundSpace.from_breakpoints(np.arange(n + 1) * float(spacing))


def run_universality(spec: ExperimentSpec, threads: int = 1) -> Report:
    p = spec.params
    rep = Report(spec.kind)
    orders, drivers = p["orders"], p["drivers"]
    final_n = p["n_grid"][-1] if p["n_grid"] else None

    def point(n: int) -> tuple[list[dict], list[dict]]:
        space = _poisson_space(n, p["spacing"])
        ks = [Kernel(space, _family(p["family"], q, n, 1.0, s).values) for q, s in zip(orders, p["family_seeds"])]
        d = len(ks)
        sig = np.zeros((d, d))
        for i, j in itertools.product(range(d), repeat=2):
            if ks[i].order == ks[j].order:
                sig[i, j] = math.factorial(ks[i].order) * float(np.sum(ks[i].values * ks[j].values))
        Sigma = bounds.CovMatrix(sig)
        rows, checks = [], []
        for j, f in enumerate(ks):
            F = sampling.homogeneous_sum_element(f)
            m2, m4 = chaos.moment2(F), chaos.moment4(F)
            rows.append({"n": n, "part": "A0", "coordinate": j, "q": f.order, "exact_E4": m4,
                         "gaussian_E4": 3 * m2**2, "exact_kappa4": m4 - 3 * m2**2, "verdict": m4 - 3 * m2**2 >= -1e-9})
        base = derive_seed(spec.seed, "universality", n)
        S = {drv: sampling.sample_homogeneous_sums(ks, drv, p["samples"], base) for drv in drivers}
        for drv in drivers:
            m = stats.moment_estimators(S[drv])
            for j in range(d):
                rows.append({"n": n, "part": "A1", "driver": drv, "coordinate": j, "mc_kappa4": m["kappa4"][j],
                             "mc_kappa4_se": m["kappa4_se"][j], "verdict": True})
            gaps = stats.smooth_test_distance(S[drv], Sigma, stats.default_test_family(d, p["radii"]),
                                              seed=derive_seed(base, "reference"))
            worst = max(gaps, key=lambda g: g.gap / max(g.function.smoothness.M3, 1e-300))
            rows.append({"n": n, "part": "A3", "driver": drv, "max_gap": max(g.gap for g in gaps),
                         "worst_function": worst.function.name, "worst_gap_se": worst.se, "verdict": True})
        for a, b in itertools.combinations(drivers, 2):
            for j in range(d):
                w1, se = stats.wasserstein1_1d_se(S[a][:, j], S[b][:, j])
                gated = n == final_n and a in p["pairwise_drivers"] and b in p["pairwise_drivers"]
                ok = w1 <= p["w1_final_max"] if gated else True
                rows.append({"n": n, "part": "pairwise_w1", "driver": a, "driver_b": b, "coordinate": j,
                             "mc_w1": w1, "mc_w1_se": se, "gated": gated, "verdict": ok})
        return rows, checks

    results = _pmap(point, list(p["n_grid"]), threads)
    for rows, checks in results:
        rep.rows.extend(rows)
        rep.checks.extend(checks)
    for j in range(len(orders)):
        k = [r["exact_kappa4"] for r in rep.rows if r["part"] == "A0" and r["coordinate"] == j]
        if len(k) > 1:
            rep.check(f"A0_kappa4_decreasing_coord{j}", all(b < a for a, b in zip(k, k[1:])), values=k)

    cp = p["contrapositive"]
    if cp:
        n = cp["n_cells"]
        f = Kernel(_poisson_space(n, p["spacing"]), _family(cp["family"], cp["q"], n, 1.0).values)
        F = sampling.homogeneous_sum_element(f)
        k4 = chaos.fourth_cumulant(F)
        cn = [norm(contract(f, f, r)) for r in range(1, f.order)]
        rep.rows.append({"n": n, "part": "contrapositive_A0", "q": f.order, "exact_kappa4": k4,
                         "exact_contraction_norms": cn, "verdict": True})
        base = derive_seed(spec.seed, "universality-contrapositive", n)
        for drv in drivers:
            x = sampling.sample_homogeneous_sums([f], drv, p["samples"], base)
            m = stats.moment_estimators(x)
            z = float(m["kappa4"][0] / m["kappa4_se"][0])
            rep.rows.append({"n": n, "part": "contrapositive_A1", "driver": drv, "mc_kappa4": m["kappa4"][0],
                             "mc_kappa4_se": m["kappa4_se"][0], "z": z, "verdict": z >= cp["min_z"]})
    return rep


# -- inequality sweep -------------------------------------------------------------------------------
def _random_space(rng: np.random.Generator, max_cells: int, lam_range) -> GroundSpace:
    m = int(rng.integers(1, max_cells + 1))
    lo, hi = np.log(lam_range[0]), np.log(lam_range[1])
    return GroundSpace(tuple(float(x) for x in np.exp(rng.uniform(lo, hi, size=m))))


def sweep_case(seed: int, case: int, p: dict) -> dict:
    rng = stream(seed, "lemma-sweep", case)
    space = _random_space(rng, p["max_cells"], p["lam_range"])
    pq = [int(rng.integers(1, p["max_order"] + 1)) for _ in range(2)]
    F = random_element(space, pq[0], rng, p["max_terms"])
    G = random_element(space, pq[1], rng, p["max_terms"])
    checks = []
    for r in (lemmas.verify_gamma_variance(F, G), lemmas.verify_square_covariance(F, G),
              lemmas.verify_vector_fourth_moment([F, G])):
        checks.extend(r.checks)
    f = random_kernel(space, pq[0], rng, diagonal_free=False)
    g = random_kernel(space, pq[1], rng, diagonal_free=False)
    ident = contraction_identity_check(f, g)
    worst = min(checks, key=lambda c: c.slack / max(c.scale, 1e-300))
    ok = all(c.ok for c in checks) and ident.relative_gap <= 1e-10 and ident.lower_bound_slack >= -1e-9 * max(
        abs(ident.lhs), 1e-300)
    return {
        "case": case, "p": pq[0], "q": pq[1], "cells": space.n_cells, "n_checks": len(checks) + 1,
        "worst_check": worst.name, "worst_relative_slack": worst.slack / max(worst.scale, 1e-300),
        "identity_relative_gap": ident.relative_gap, "verdict": ok,
    }


def run_lemma_sweep(spec: ExperimentSpec, threads: int = 1) -> Report:
    p = spec.params
    rep = Report(spec.kind)
    rep.rows.extend(_pmap(lambda c: sweep_case(spec.seed, c, p), list(range(p["n_cases"])), threads))
    if p["include_tight_cases"]:
        for lam in (0.5, 4.0, 100.0):
            space = GroundSpace((lam,))
            F = ChaosElement.charlier(space, 0, 1)
            r = lemmas.verify_gamma_variance(F, F)
            var_g = r.values["F.var_gamma"]
            low = r["F:f2gamma-lower"].slack
            ok = abs(var_g - lam / 4) <= 1e-9 * lam and abs(low - lam / 2) <= 1e-9 * lam and r.ok
            rep.rows.append({"case": f"C1_lam{lam:g}", "p": 1, "q": 1, "cells": 1, "n_checks": len(r.checks),
                             "exact_var_gamma": var_g, "expected_var_gamma": lam / 4, "f2gamma_lower_slack": low,
                             "expected_f2gamma_lower_slack": lam / 2, "verdict": ok})
    rep.check("zero_violations", all(r["verdict"] for r in rep.rows), cases=len(rep.rows))
    return rep


# -- pair limits ---------------------------------------------------------------------------------
def _pair_element(p: dict, q: int, seed: int) -> ChaosElement:
    space = GroundSpace.uniform(max(p["cells"], 1), p["lam"])
    return random_element(space, q, stream(seed, "pair-element", q), max_terms=4)


def run_pair_limits(spec: ExperimentSpec, threads: int = 1) -> Report:
    p = spec.params
    rep = Report(spec.kind)
    zmax = p["z_max"]
    C1 = ChaosElement.charlier(GroundSpace((p["lam"],)), 0, 1)
    n_ks = len(p["ks_orders"]) * len(p["ks_times"]) * 2
    alpha = p["ks_alpha"] / max(n_ks, 1)

    tasks: list[tuple] = [("rho",), ("gamma",)]
    tasks += [("mehler", q) for q in p["mehler_orders"]]
    tasks += [("ks", q, t) for q in p["ks_orders"] for t in p["ks_times"]]

    def run(task) -> dict:
        kind = task[0]
        if kind == "rho":
            r = sampling.estimate_rho(C1, p["t_grid"], p["n_rho"], derive_seed(spec.seed, "rho"), p["order"])
            z = float(r.z)
            return {"check": "rho", "exact": float(r.exact), "mc_estimate": float(r.estimate),
                    "mc_se": float(r.se), "z": z, "per_t": r.per_t.tolist(), "verdict": abs(z) <= zmax}
        if kind == "gamma":
            r = sampling.estimate_gamma_limit(C1, C1, p["t_grid"], p["n_outer"], p["n_inner"],
                                              derive_seed(spec.seed, "gamma"), p["order"])
            return {"check": "gamma_limit", "n_outer": p["n_outer"], "n_inner": p["n_inner"],
                    "max_abs_z": r.max_abs_z, "mean_se": float(np.mean(r.se)),
                    "mean_abs_error": float(np.mean(np.abs(r.estimate - r.exact))), "verdict": r.max_abs_z <= zmax}
        if kind == "mehler":
            q = task[1]
            F = _pair_element(p, q, spec.seed)
            r = sampling.mehler_check(F, p["mehler_t"], p["n_outer"], p["n_inner"], derive_seed(spec.seed, "mehler", q))
            return {"check": "mehler", "q": q, "t": p["mehler_t"], "max_abs_z": r.max_abs_z,
                    "verdict": r.max_abs_z <= zmax}
        q, t = task[1], task[2]
        F = _pair_element(p, q, spec.seed)
        r = sampling.exchangeability_test(F, t, p["ks_samples"], derive_seed(spec.seed, "ks", q, int(round(t * 1e6))))
        return {"check": "exchangeability", "q": q, "t": t, "ks_marginal_stat": r.marginal_stat,
                "ks_marginal_p": r.marginal_pvalue, "ks_symmetry_stat": r.symmetry_stat,
                "ks_symmetry_p": r.symmetry_pvalue, "alpha_bonferroni": alpha, "verdict": r.passes(alpha)}

    rep.rows.extend(_pmap(run, tasks, threads))
    return rep


RUNNERS: dict[str, Callable[[ExperimentSpec, int], Report]] = {
    "univariate_fmt": run_univariate_fmt,
    "multivariate_pt": run_multivariate_pt,
    "transfer": run_transfer,
    "universality": run_universality,
    "lemma_sweep": run_lemma_sweep,
    "pair_limits": run_pair_limits,
}
