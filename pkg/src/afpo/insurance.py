"""Insurer layer: premiums, scenario classes, payments and residual claims.

Settlement follows the proportional surplus / proportional capital rules:

* favorable   (S < k):      Y_i = X_i + c_i (k - S)
* intermediate (k <= S <= K): Y_i = X_i
* default     (S > K):      Y_i = K X_i / S,  eps_i = X_i - Y_i
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import InputError

__all__ = [
    "ScenarioClass",
    "InsurerConfig",
    "PremiumSchedule",
    "ScenarioSample",
    "Settlement",
    "compute_premiums",
    "classify",
    "settle",
    "settle_batch",
    "no_free_enrichment_check",
]


class ScenarioClass(IntEnum):
    FAVORABLE = 0
    INTERMEDIATE = 1
    DEFAULT = 2

    @property
    def label(self) -> str:
        return self.name.lower()


@dataclass(frozen=True)
class InsurerConfig:
    """Premium loadings, insurer capital and surplus shares.

    ``surplus_shares`` holds ``c_1..c_n``; the insurer keeps ``c_0 = 1 - sum``.
    Exactly one of ``k0`` (initial capital) and ``capital`` (total ``K``) is
    normally given; when ``capital`` is set, ``k0`` is derived as ``K - k``.
    """

    theta: float = 0.3
    eta: float = 0.0
    k0: float = 0.0
    surplus_shares: tuple[float, ...] | None = None
    capital: float | None = None

    def __post_init__(self):
        if self.theta < 0 or self.eta < 0:
            raise InputError("premium loadings theta and eta must be >= 0")
        if self.capital is None and self.k0 < 0:
            raise InputError("initial capital k0 must be >= 0")
        if self.surplus_shares is not None:
            c = np.asarray(self.surplus_shares, dtype=float)
            if np.any(c < 0):
                raise InputError("surplus shares must be non-negative")
            if c.sum() > 1 + 1e-12:
                raise InputError(f"surplus shares sum to {c.sum()} > 1")

    def shares(self, n: int) -> tuple[float, np.ndarray]:
        """Return ``(c_0, c)`` normalized so that ``c_0 + sum(c) == 1``."""
        if self.surplus_shares is None:
            return 1.0, np.zeros(n)
        c = np.asarray(self.surplus_shares, dtype=float)
        if c.shape != (n,):
            raise InputError(f"expected {n} surplus shares, got {c.size}")
        c = np.minimum(c, 1.0)
        return 1.0 - c.sum(), c


@dataclass(frozen=True)
class PremiumSchedule:
    pi: np.ndarray
    k: float
    K: float

    @property
    def k0(self) -> float:
        return self.K - self.k


@dataclass(frozen=True)
class ScenarioSample:
    losses: np.ndarray
    S: float
    cls: ScenarioClass
    payments: np.ndarray
    residuals: np.ndarray
    insurer_wealth: float


@dataclass(frozen=True)
class Settlement:
    """Column-oriented settlement of many scenarios (rows) and regions (columns)."""

    X: np.ndarray
    S: np.ndarray
    cls: np.ndarray
    Y: np.ndarray
    eps: np.ndarray
    insurer_wealth: np.ndarray
    surplus: np.ndarray  # c_i (k - S)^+ received by each region

    @property
    def S_eps(self) -> np.ndarray:
        return self.eps.sum(axis=1)

    def class_counts(self) -> dict[str, int]:
        return {c.label: int(np.sum(self.cls == c)) for c in ScenarioClass}

    def solvency_share(self) -> float:
        return float(np.mean(self.cls != ScenarioClass.DEFAULT))

    def scenario(self, j: int) -> ScenarioSample:
        return ScenarioSample(
            losses=self.X[j],
            S=float(self.S[j]),
            cls=ScenarioClass(int(self.cls[j])),
            payments=self.Y[j],
            residuals=self.eps[j],
            insurer_wealth=float(self.insurer_wealth[j]),
        )


def compute_premiums(loss_samples, cfg: InsurerConfig) -> PremiumSchedule:
    """Expected-value plus standard-deviation premium from simulated losses.

    Sample standard deviations use the ``n - 1`` denominator.
    """
    X = np.asarray(loss_samples, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2 or X.shape[1] < 1:
        raise InputError("premiums need a (scenarios x regions) matrix with >= 2 scenarios")
    if np.any(X < 0):
        raise InputError("losses must be non-negative")
    pi = (1.0 + cfg.theta) * X.mean(axis=0) + cfg.eta * X.std(axis=0, ddof=1)
    k = float(pi.sum())
    K = float(cfg.capital) if cfg.capital is not None else k + cfg.k0
    return PremiumSchedule(pi=pi, k=k, K=K)


def classify(S, sched: PremiumSchedule):
    """Scenario class of aggregate loss ``S``; ties ``S == k`` and ``S == K`` are intermediate."""
    S_arr = np.asarray(S, dtype=float)
    if np.any(S_arr < 0):
        raise InputError("aggregate loss must be non-negative")
    out = np.full(S_arr.shape, ScenarioClass.INTERMEDIATE, dtype=np.int8)
    out[S_arr < sched.k] = ScenarioClass.FAVORABLE
    out[S_arr > sched.K] = ScenarioClass.DEFAULT
    if out.ndim == 0:
        return ScenarioClass(int(out))
    return out


def settle_batch(X, sched: PremiumSchedule, cfg: InsurerConfig) -> Settlement:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if np.any(X < 0):
        raise InputError("losses must be non-negative")
    n = X.shape[1]
    c0, c = cfg.shares(n)
    S = X.sum(axis=1)
    cls = classify(S, sched)
    fav = cls == ScenarioClass.FAVORABLE
    dft = cls == ScenarioClass.DEFAULT

    surplus = np.zeros_like(X)
    surplus[fav] = np.outer(sched.k - S[fav], c)
    Y = X + surplus
    eps = np.zeros_like(X)
    if np.any(dft):
        Sd = S[dft]
        if np.any(Sd <= 0):  # unreachable while K >= 0
            raise InputError("default scenario with zero aggregate loss")
        Y[dft] = X[dft] * (sched.K / Sd)[:, None]
        eps[dft] = np.maximum(X[dft] - Y[dft], 0.0)

    wealth = np.where(fav, sched.k0 + c0 * (sched.k - S), sched.K - S)
    wealth[dft] = 0.0
    return Settlement(X=X, S=S, cls=cls, Y=Y, eps=eps, insurer_wealth=wealth, surplus=surplus)


def settle(losses, sched: PremiumSchedule, cfg: InsurerConfig) -> ScenarioSample:
    """Settle a single scenario."""
    return settle_batch(np.asarray(losses, dtype=float)[None, :], sched, cfg).scenario(0)


@dataclass
class EnrichmentReport:
    passed: bool
    flags: list[tuple[int, int]]

    @property
    def n_flags(self) -> int:
        return len(self.flags)


def no_free_enrichment_check(settlement: Settlement, sched: PremiumSchedule,
                             cfg: InsurerConfig) -> EnrichmentReport:
    """Flag every (scenario, region) whose surplus share exceeds its premium."""
    bad = settlement.surplus > sched.pi[None, :] * (1 + 1e-12)
    flags = [(int(j), int(i)) for j, i in zip(*np.nonzero(bad))]
    return EnrichmentReport(passed=not flags, flags=flags)
