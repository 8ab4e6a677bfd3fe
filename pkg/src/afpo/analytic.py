"""Closed-form AFPO rule for two CARA regions under a Dirac-uniform loss.

The aggregate residual loss is 0 with probability ``p0`` and uniform on
``[0, w1 + w2]`` otherwise. With ``zeta = ln(alpha2 / alpha1)`` the Pareto
rule has three layers: a retention layer paid by one region alone, a
quota-share layer where region 1 pays ``gamma1 / (gamma1 + gamma2)`` of each
extra unit, and a limit layer once a region hits its wealth. Which region
retains and which caps first depends on the sign and size of ``zeta``; the
three orderings are the three cases below.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .errors import InfeasibleParameters, InputError

__all__ = [
    "Cara2Params",
    "Cara2Solution",
    "SweepRow",
    "case_intervals",
    "classify_case",
    "solve_zeta",
    "analytic_fairness_residual",
    "expected_taxes",
    "sensitivity_sweep",
    "baseline_params",
]

_RTOL = 1e-12


@dataclass(frozen=True)
class Cara2Params:
    """Two-region CARA setting.

    When ``mu1`` is omitted it is set so that ``mu1 + mu2`` equals the mean
    aggregate loss ``(1 - p0) (w1 + w2) / 2``; no fair rule exists otherwise.
    """

    w1: float
    w2: float
    gamma1: float
    gamma2: float
    mu2: float
    p0: float
    mu1: float | None = None

    def __post_init__(self):
        for name in ("w1", "w2", "gamma1", "gamma2"):
            if not getattr(self, name) > 0:
                raise InputError(f"{name} must be > 0")
        if not 0 <= self.p0 < 1:
            raise InputError("p0 must lie in [0, 1)")
        mean_s = (1 - self.p0) * (self.w1 + self.w2) / 2
        if self.mu1 is None:
            object.__setattr__(self, "mu1", mean_s - self.mu2)
        if not (self.mu1 > 0 and self.mu2 > 0):
            raise InputError("expected losses mu1, mu2 must be > 0")
        if abs(self.mu1 + self.mu2 - mean_s) > 1e-9 * max(1.0, mean_s):
            raise InputError(
                f"mu1 + mu2 = {self.mu1 + self.mu2} differs from the mean aggregate "
                f"loss {mean_s}; expected taxes always sum to the latter")

    @property
    def W(self) -> float:
        return self.w1 + self.w2

    @property
    def gamma(self) -> float:
        return self.gamma2 / self.gamma1

    @property
    def mu(self) -> float:
        return self.mu2 / self.mu1

    @property
    def r1(self) -> float:
        return self.w1 / self.gamma1

    @property
    def r2(self) -> float:
        return self.w2 / self.gamma2

    @property
    def M(self) -> float:
        return (2 / (1 - self.p0)) ** 2 * (self.mu + 1) * (self.mu1 / self.gamma1) ** 2

    @property
    def ordered(self) -> bool:
        return self.r1 <= self.r2 * (1 + _RTOL)

    def swapped(self) -> "Cara2Params":
        return Cara2Params(w1=self.w2, w2=self.w1, gamma1=self.gamma2, gamma2=self.gamma1,
                           mu2=self.mu1, mu1=self.mu2, p0=self.p0)


def baseline_params(**overrides) -> Cara2Params:
    """Sensitivity baseline: w=(4.5, 10), gamma=(1, 2), p0=0.2, mu2=4."""
    base = dict(w1=4.5, w2=10.0, gamma1=1.0, gamma2=2.0, mu2=4.0, p0=0.2)
    base.update(overrides)
    return Cara2Params(**base)


def case_intervals(p: Cara2Params) -> dict[int, tuple[float, float]]:
    """Ranges of ``M`` that select each case."""
    g, mu, r1, r2 = p.gamma, p.mu, p.r1, p.r2
    return {
        1: (g**2 / mu * r2**2, g / mu * r1**2 + g**2 / mu * r2**2),
        2: ((g + 1) * r1**2, (1 - g) * r1**2 + 2 * g * r1 * r2),
        3: (r1**2, (g + 1) * r1**2),
    }


def _in(x: float, lo: float, hi: float) -> bool:
    tol = _RTOL * max(1.0, abs(lo), abs(hi))
    return lo - tol <= x <= hi + tol


def classify_case(p: Cara2Params) -> int:
    """Case 1, 2 or 3; a value on a shared boundary goes to the lower-numbered case."""
    if not p.ordered:
        raise InputError("regions must be ordered so that w1/gamma1 <= w2/gamma2")
    M = p.M
    for case, (lo, hi) in case_intervals(p).items():
        if _in(M, lo, hi):
            return case
    raise InfeasibleParameters(f"M = {M:.6g} lies outside every case interval")


def zeta_interval(p: Cara2Params, case: int) -> tuple[float, float]:
    return {
        1: (0.0, p.r1),
        2: (p.r1 - p.r2, 0.0),
        3: (-p.r2, p.r1 - p.r2),
    }[case]


def _zeta_closed_form(p: Cara2Params, case: int) -> float:
    g, mu, M = p.gamma, p.mu, p.M
    if case == 1:
        return p.r1 - math.sqrt(max(M * mu / g - g * p.r2**2, 0.0))
    if case == 2:
        mean_term = 2 * (p.mu1 + p.mu2) / (1 - p.p0)
        return ((1 + g) * p.w1 / 2 + mean_term * (p.mu1 / ((1 - p.p0) * p.w1) - 1)) / p.gamma2
    return -p.r2 + math.sqrt(max(M / g - p.r1**2 / g, 0.0))


def _case_of_zeta(p: Cara2Params, zeta: float) -> int:
    for case in (1, 2, 3):
        if _in(zeta, *zeta_interval(p, case)):
            return case
    raise InfeasibleParameters(f"zeta = {zeta} outside [-w2/gamma2, w1/gamma1]")


@dataclass(frozen=True)
class Cara2Solution:
    """Piecewise-affine two-region rule fixed by ``zeta``.

    ``lower`` ends the retention layer and ``upper`` starts the limit layer.
    """

    params: Cara2Params
    case_id: int
    zeta: float
    alpha1: float
    alpha2: float
    lower: float
    upper: float

    @property
    def slope1(self) -> float:
        p = self.params
        return p.gamma1 / (p.gamma1 + p.gamma2)

    @property
    def cap_c(self) -> float:
        p = self.params
        return (1 + p.gamma) * p.w1 - p.gamma2 * self.zeta

    @classmethod
    def from_zeta(cls, p: Cara2Params, zeta: float, case_id: int | None = None) -> "Cara2Solution":
        if case_id is None:
            case_id = _case_of_zeta(p, zeta)
        alpha1 = 1.0 / (1.0 + math.exp(zeta))
        c = (1 + p.gamma) * p.w1 - p.gamma2 * zeta
        if case_id == 1:
            lower, upper = p.gamma1 * zeta, c
        elif case_id == 2:
            lower, upper = -p.gamma2 * zeta, c
        else:
            lower, upper = -p.gamma2 * zeta, ((p.gamma + 1) * p.W - c) / p.gamma
        return cls(params=p, case_id=case_id, zeta=float(zeta), alpha1=alpha1,
                   alpha2=1.0 - alpha1, lower=float(lower), upper=float(upper))

    def T1(self, s):
        p = self.params
        s = np.asarray(s, dtype=float)
        if np.any(s < 0) or np.any(s > p.W * (1 + 1e-12)):
            raise InputError(f"aggregate loss outside [0, {p.W}]")
        retention = s if self.case_id == 1 else np.zeros_like(s)
        limit = np.full_like(s, p.w1) if self.case_id in (1, 2) else s - p.w2
        quota = self.slope1 * (s + p.gamma2 * self.zeta)
        return np.where(s <= self.lower, retention, np.where(s <= self.upper, quota, limit))

    def T2(self, s):
        return np.asarray(s, dtype=float) - self.T1(s)

    def T(self, s):
        t1 = self.T1(s)
        return np.stack([t1, np.asarray(s, dtype=float) - t1], axis=-1)

    @property
    def breakpoints(self) -> tuple[float, float]:
        return self.lower, self.upper


def solve_zeta(p: Cara2Params) -> Cara2Solution:
    """Classify the case and build the fair rule from its closed-form weight."""
    case = classify_case(p)
    zeta = _zeta_closed_form(p, case)
    lo, hi = zeta_interval(p, case)
    tol = 1e-9 * max(1.0, abs(lo), abs(hi))
    if not lo - tol <= zeta <= hi + tol:
        raise InfeasibleParameters(f"case {case} weight {zeta} outside its interval [{lo}, {hi}]")
    return Cara2Solution.from_zeta(p, min(max(zeta, lo), hi), case_id=case)


@lru_cache(maxsize=None)
def _gauss_legendre(n: int):
    return np.polynomial.legendre.leggauss(n)


def expected_taxes(sol: Cara2Solution, nodes: int = 256) -> np.ndarray:
    """``(E[T1], E[T2])`` by Gauss-Legendre quadrature on each affine piece."""
    p = sol.params
    x, w = _gauss_legendre(nodes)
    cuts = sorted({0.0, min(max(sol.lower, 0.0), p.W), min(max(sol.upper, 0.0), p.W), p.W})
    total = np.zeros(2)
    for a, b in zip(cuts[:-1], cuts[1:]):
        if b <= a:
            continue
        s = 0.5 * (b - a) * x + 0.5 * (a + b)
        total += 0.5 * (b - a) * (w[:, None] * sol.T(s)).sum(axis=0)
    # the atom at zero contributes T(0) = 0
    return (1 - p.p0) * total / p.W


def analytic_fairness_residual(sol: Cara2Solution, p: Cara2Params | None = None,
                               nodes: int = 256) -> np.ndarray:
    """``E[T_i] - mu_i`` for both regions."""
    p = p or sol.params
    return expected_taxes(sol, nodes) - np.array([p.mu1, p.mu2])


@dataclass(frozen=True)
class SweepRow:
    ratio: float
    case: int | None
    alpha1: float
    alpha2: float
    zeta: float
    status: str = "ok"


def sensitivity_sweep(p: Cara2Params, vary: str, lo: float = 0.1, hi: float = 10.0,
                      steps: int = 100) -> list[SweepRow]:
    """Closed-form weights along a one-dimensional parameter sweep.

    ``vary="mu"`` moves ``mu2/mu1`` with ``mu1 + mu2`` held at the mean
    aggregate loss; ``vary="gamma"`` moves ``gamma2/gamma1`` with ``gamma1``
    fixed. Points that break the region ordering or fall outside every case
    are kept with a non-``ok`` status.
    """
    if vary not in ("mu", "gamma"):
        raise InputError("vary must be 'mu' or 'gamma'")
    if steps < 2 or not 0 < lo < hi:
        raise InputError("sweep needs 0 < lo < hi and steps >= 2")
    rows = []
    mean_s = (1 - p.p0) * p.W / 2
    for r in np.linspace(lo, hi, steps):
        r = float(r)
        if vary == "mu":
            mu1 = mean_s / (1 + r)
            q = replace(p, mu1=mu1, mu2=mean_s - mu1)
        else:
            q = replace(p, gamma2=r * p.gamma1)
        if not q.ordered:
            rows.append(SweepRow(r, None, math.nan, math.nan, math.nan, "order_violated"))
            continue
        try:
            sol = solve_zeta(q)
        except InfeasibleParameters:
            rows.append(SweepRow(r, None, math.nan, math.nan, math.nan, "infeasible"))
            continue
        rows.append(SweepRow(r, sol.case_id, sol.alpha1, sol.alpha2, sol.zeta))
    return rows
