"""Exact evaluation of the spectral inequalities for homogeneous chaos elements.

Every check is reported as ``lhs <= rhs`` with ``slack = rhs - lhs``; a check
passes when ``slack >= -SLACK_RTOL * scale`` where ``scale`` is the largest of
``|lhs|``, ``|rhs|`` and the size of the moments the two sides are built from
(so exact zeros obtained by cancellation are not judged against round-off).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

from . import chaos
from .chaos import ChaosElement
from .kernels import contract, norm

__all__ = [
    "SLACK_RTOL",
    "Inequality",
    "LemmaReport",
    "verify_gamma_variance",
    "verify_square_covariance",
    "verify_vector_fourth_moment",
    "verify_lemma22",
    "verify_lemma23",
    "contraction_cumulant_sum",
]

SLACK_RTOL = 1e-9


@dataclass(frozen=True)
class Inequality:
    name: str
    lhs: float
    rhs: float
    ref: float = 0.0

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs

    @property
    def scale(self) -> float:
        return max(abs(self.lhs), abs(self.rhs), abs(self.ref))

    @property
    def ok(self) -> bool:
        return self.slack >= -SLACK_RTOL * self.scale

    def as_row(self) -> dict:
        return {"name": self.name, "lhs": self.lhs, "rhs": self.rhs, "slack": self.slack, "ok": self.ok}


@dataclass
class LemmaReport:
    checks: list[Inequality] = field(default_factory=list)
    values: dict[str, float] = field(default_factory=dict)

    def add(self, name: str, lhs: float, rhs: float, ref: float = 0.0) -> None:
        self.checks.append(Inequality(name, float(lhs), float(rhs), float(ref)))

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    def violations(self) -> list[Inequality]:
        return [c for c in self.checks if not c.ok]

    def __getitem__(self, name: str) -> Inequality:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def contraction_cumulant_sum(F: ChaosElement) -> float:
    """``p!^2 sum_{r=1}^{p-1} C(p,r)^2 ||f (x)_r f||^2`` for ``F = I_p(f)``."""
    p = F.homogeneous_grade()
    f = chaos.kernel_of(F)
    return sum(
        math.factorial(p) ** 2 * math.comb(p, r) ** 2 * norm(contract(f, f, r)) ** 2 for r in range(1, p)
    )


def _single(F: ChaosElement, report: LemmaReport, tag: str) -> None:
    p = F.homogeneous_grade()
    m2 = chaos.moment2(F)
    m4 = chaos.moment4(F)
    k4 = m4 - 3.0 * m2**2
    F2 = F.square()
    G = chaos.gamma(F, F)
    var_g = chaos.variance(G)
    e_f2g = chaos.inner(F2, G)
    mid = 3.0 / p * e_f2g - m4
    proj_var = sum(chaos.variance(F2.project(k)) for k in range(1, 2 * p))

    report.values.update({
        f"{tag}.p": p, f"{tag}.E2": m2, f"{tag}.E4": m4, f"{tag}.kappa4": k4,
        f"{tag}.var_gamma": var_g, f"{tag}.f2gamma_mid": mid,
    })
    ref = m2**2
    report.add(f"{tag}:var-gamma-kappa4", var_g, (2 * p - 1) ** 2 / 4.0 * k4, ref)
    report.add(f"{tag}:f2gamma-lower", 0.0, mid, ref)
    report.add(f"{tag}:f2gamma-upper", mid, (4 * p - 3) / (2.0 * p) * k4, ref)
    report.add(f"{tag}:contraction-sum", contraction_cumulant_sum(F), k4, ref)
    report.add(f"{tag}:square-projections", proj_var, k4, ref)
    report.add(f"{tag}:kappa4-nonneg", 0.0, k4, ref)
    report.add(f"{tag}:kappa4-var-gamma", p * k4, 6.0 * var_g, p * ref)
    report.add(f"{tag}:rho-nonneg", 0.0, chaos.rho(F), p * ref)


def verify_gamma_variance(F: ChaosElement, G: ChaosElement) -> LemmaReport:
    """Variance bound for Gamma(F, G) and the single-element inequalities for F and G."""
    p, q = F.homogeneous_grade(), G.homogeneous_grade()
    report = LemmaReport()
    _single(F, report, "F")
    if G is not F:
        _single(G, report, "G")
    FG = chaos.multiply(F, G)
    var_g = chaos.variance(chaos.gamma(F, G))
    e_fg = chaos.inner(F, G)
    cross = chaos.inner(FG, FG) - 2.0 * e_fg**2 - chaos.variance(F) * chaos.variance(G)
    report.values.update({"FG.var_gamma": var_g, "FG.cross": cross})
    ref = (p + q - 1) ** 2 / 4.0 * chaos.moment2(F) * chaos.moment2(G)
    report.add("FG:var-gamma-cross", var_g, (p + q - 1) ** 2 / 4.0 * cross, ref)
    return report


def verify_square_covariance(F: ChaosElement, G: ChaosElement) -> LemmaReport:
    """Covariance of squares against fourth cumulants."""
    p, q = F.homogeneous_grade(), G.homogeneous_grade()
    if p > q:
        F, G, p, q = G, F, q, p
    report = LemmaReport()
    k4f, k4g = chaos.fourth_cumulant(F), chaos.fourth_cumulant(G)
    cov_sq = chaos.covariance(F.square(), G.square())
    ref = chaos.moment2(F) * chaos.moment2(G)
    if p < q:
        report.add("cov-squares-mixed", cov_sq, math.sqrt(chaos.moment4(F)) * math.sqrt(max(k4g, 0.0)), ref)
    else:
        e_fg = chaos.inner(F, G)
        report.add("cov-squares-same", cov_sq - 2.0 * e_fg**2, 2.0 * math.sqrt(max(k4f, 0.0) * max(k4g, 0.0)), ref)
    report.values.update({"cov_squares": cov_sq, "kappa4.F": k4f, "kappa4.G": k4g})
    return report


def verify_vector_fourth_moment(Fs: Sequence[ChaosElement]) -> LemmaReport:
    """Excess fourth moment of a chaos vector versus its Gaussian counterpart.

    Coordinates are sorted by chaos order first. Also checks the Gamma
    variance chain ``sum_ij Var Gamma(F_i, F_j) <= (2 q_d - 1)^2 / 4 * excess``.
    """
    Fs = sorted(Fs, key=lambda F: F.homogeneous_grade())
    d = len(Fs)
    qd = Fs[-1].homogeneous_grade()
    sq = [F.square() for F in Fs]
    sigma = [[chaos.inner(Fs[i], Fs[j]) for j in range(d)] for i in range(d)]
    ef4 = sum(chaos.inner(sq[i], sq[j]) for i in range(d) for j in range(d))
    en4 = sum(sigma[i][i] * sigma[j][j] + 2.0 * sigma[i][j] ** 2 for i in range(d) for j in range(d))
    excess = ef4 - en4
    k4 = [chaos.moment4(F) - 3.0 * chaos.moment2(F) ** 2 for F in Fs]
    m4 = [chaos.moment4(F) for F in Fs]
    sk = sum(math.sqrt(max(k, 0.0)) for k in k4)
    bound = 2.0 * sk**2 + 2.0 * sum(math.sqrt(m) for m in m4[:-1]) * sum(math.sqrt(max(k, 0.0)) for k in k4[1:])
    report = LemmaReport()
    report.values.update({"E|F|^4": ef4, "E|N|^4": en4})
    report.add("vector-excess", excess, bound, en4)
    if all(F.homogeneous_grade() == qd for F in Fs):
        report.add("vector-excess-same-chaos", excess, 2.0 * sk**2, en4)
    report.add("excess-nonneg", 0.0, excess, en4)
    var_sum = sum(chaos.variance(chaos.gamma(Fs[i], Fs[j])) for i in range(d) for j in range(d))
    report.add("gamma-sum-excess", var_sum, (2 * qd - 1) ** 2 / 4.0 * excess, (2 * qd - 1) ** 2 / 4.0 * en4)
    return report


# names required by the public interface
verify_lemma22 = verify_gamma_variance
verify_lemma23 = verify_square_covariance
