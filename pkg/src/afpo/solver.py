"""Numerical AFPO solver for any number of regions.

Expected taxes under a candidate rule are estimated from a histogram of the
aggregate residual loss; the weights are then nudged on the simplex until
every region's expected tax matches its expected residual claim.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .disutility import DisutilityFn
from .errors import CapacityError, InputError
from .pareto_rule import PiecewiseTaxRule

__all__ = [
    "SolverConfig",
    "ResidualHistogram",
    "FairnessGap",
    "SolveResult",
    "expected_participation",
    "fairness_gap",
    "extreme_pairs",
    "solve",
]

logger = logging.getLogger(__name__)

ALPHA_FLOOR = 1e-12


@dataclass(frozen=True)
class SolverConfig:
    """Tuning knobs of the fixed-point iteration.

    ``step_size=None`` means ``0.1 / mean(S_eps)``; ``adjust_m=None`` means
    ``max(2, ceil(n / 10))``. ``fairness_tol`` is relative to ``mean(S_eps)``;
    set it to 0 to stop on the weight change alone. The step is halved after
    ``patience`` consecutive increases of the largest gap, or after ``stall``
    iterations without a new smallest gap (``stall=0`` disables the latter).
    """

    delta: float = 1e-6
    step_size: float | None = None
    bins: int = 200
    adjust_m: int | None = None
    max_iter: int = 50_000
    fairness_tol: float = 1e-3
    init: str = "uniform"
    seed: int | None = None
    patience: int = 20
    stall: int = 50

    def __post_init__(self):
        if not self.delta > 0:
            raise InputError("delta must be > 0")
        if self.step_size is not None and not self.step_size > 0:
            raise InputError("step_size must be > 0")
        if self.bins < 10:
            raise InputError("bins must be >= 10")
        if self.adjust_m is not None and self.adjust_m < 2:
            raise InputError("adjust_m must be >= 2")
        if self.max_iter < 1:
            raise InputError("max_iter must be >= 1")
        if self.fairness_tol < 0:
            raise InputError("fairness_tol must be >= 0")
        if self.patience < 1 or self.stall < 0:
            raise InputError("patience must be >= 1 and stall >= 0")
        if self.init not in ("uniform", "random"):
            raise InputError("init must be 'uniform' or 'random'")

    def resolved_m(self, n: int) -> int:
        m = self.adjust_m if self.adjust_m is not None else max(2, math.ceil(n / 10))
        if m > n:
            raise InputError(f"adjust_m = {m} exceeds the number of regions {n}")
        return m


@dataclass(frozen=True)
class ResidualHistogram:
    """Equal-width histogram of aggregate residual losses with an atom at zero.

    Only non-empty positive bins are stored. ``sums`` holds the total loss
    falling in each bin.
    """

    mids: np.ndarray
    counts: np.ndarray
    sums: np.ndarray
    n_zero: int
    n_total: int
    upper: float

    @classmethod
    def from_samples(cls, s, bins: int = 200) -> "ResidualHistogram":
        s = np.asarray(s, dtype=float).ravel()
        if s.size == 0:
            raise InputError("empty residual-loss sample")
        if np.any(s < 0) or np.any(~np.isfinite(s)):
            raise InputError("residual losses must be finite and non-negative")
        pos = s[s > 0]
        upper = float(s.max())
        if pos.size == 0:
            empty = np.empty(0)
            return cls(empty, empty, empty, int(s.size), int(s.size), upper)
        edges = np.linspace(0.0, upper, bins + 1)
        idx = np.clip(np.searchsorted(edges, pos, side="right") - 1, 0, bins - 1)
        counts = np.bincount(idx, minlength=bins).astype(float)
        sums = np.bincount(idx, weights=pos, minlength=bins)
        keep = counts > 0
        mids = 0.5 * (edges[:-1] + edges[1:])
        return cls(mids[keep], counts[keep], sums[keep], int(s.size - pos.size), int(s.size), upper)

    @property
    def mean(self) -> float:
        return float(self.sums.sum() / self.n_total)


def expected_participation(samples, rule: PiecewiseTaxRule, bins: int = 200) -> np.ndarray:
    """Histogram estimate of ``E[T_i(S_eps)]`` for every region.

    Each bin contributes its regions' relative participation at the bin
    midpoint times the loss mass in the bin, so the estimates add up to the
    sample mean of ``S_eps``.
    """
    hist = samples if isinstance(samples, ResidualHistogram) else \
        ResidualHistogram.from_samples(samples, bins)
    if hist.upper > rule.support_hi * (1 + 1e-12):
        raise CapacityError(
            f"pool cannot absorb worst loss: max residual {hist.upper:.6g} exceeds "
            f"total capacity {rule.support_hi:.6g}")
    if hist.mids.size == 0:
        return np.zeros(rule.n)
    t = rule.relative_participation(hist.mids)
    return (t * hist.sums[:, None]).sum(axis=0) / hist.n_total


@dataclass(frozen=True)
class FairnessGap:
    eta: np.ndarray
    mean_eps: np.ndarray
    expected_tax: np.ndarray
    mean_s: float

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.eta)))

    @property
    def relative(self) -> float:
        return self.max_abs / self.mean_s if self.mean_s > 0 else 0.0


def _check_eps(eps) -> np.ndarray:
    eps = np.asarray(eps, dtype=float)
    if eps.ndim != 2 or eps.shape[0] == 0:
        raise InputError("residual samples must be a non-empty (scenarios x regions) matrix")
    if np.any(eps < 0) or np.any(~np.isfinite(eps)):
        raise InputError("residual claims must be finite and non-negative")
    return eps


def fairness_gap(eps, rule: PiecewiseTaxRule, bins: int = 200,
                 hist: ResidualHistogram | None = None) -> FairnessGap:
    """``eta_i = mean(eps_i) - E[T_i]``; negative means region i is overcharged."""
    eps = _check_eps(eps)
    if eps.shape[1] != rule.n:
        raise InputError(f"residual samples have {eps.shape[1]} columns, rule has {rule.n} regions")
    s = eps.sum(axis=1)
    if hist is None:
        hist = ResidualHistogram.from_samples(s, bins)
    mean_eps = eps.mean(axis=0)
    et = expected_participation(hist, rule)
    return FairnessGap(eta=mean_eps - et, mean_eps=mean_eps, expected_tax=et, mean_s=float(s.mean()))


def extreme_pairs(eta, m: int) -> list[tuple[int, int]]:
    """Pair the ``m // 2`` most overcharged with the ``m // 2`` most undercharged regions.

    Rank ``k`` on the negative side is matched with rank ``k`` on the
    positive side; ties go to the lowest index. Pairs whose gaps do not have
    opposite signs are dropped, so zero gaps produce no pairs.
    """
    eta = np.asarray(eta, dtype=float)
    k = max(1, min(m, eta.size) // 2)
    low = np.argsort(eta, kind="stable")[:k]
    high = np.argsort(-eta, kind="stable")[:k]
    return [(int(lo), int(hi)) for lo, hi in zip(low, high) if eta[lo] < 0 < eta[hi]]


@dataclass
class SolveResult:
    alpha: np.ndarray
    rule: PiecewiseTaxRule
    gap: FairnessGap
    converged: bool
    reason: str
    iterations: int
    trace: list[tuple[int, float, float, float]] = field(default_factory=list)

    @property
    def warning(self) -> str | None:
        return None if self.converged else f"no convergence after {self.iterations} iterations"


def _initial_alpha(n: int, cfg: SolverConfig) -> np.ndarray:
    if cfg.init == "uniform":
        return np.full(n, 1.0 / n)
    rng = np.random.default_rng(cfg.seed)
    a = rng.dirichlet(np.ones(n))
    return np.maximum(a, ALPHA_FLOOR)


def solve(eps, caps, fns: Sequence[DisutilityFn], cfg: SolverConfig | None = None) -> SolveResult:
    """Find weights whose Pareto rule is actuarially fair for the residual sample.

    Parameters
    ----------
    eps : array_like, shape (N, n)
        Residual claims per scenario and region.
    caps : array_like, shape (n,)
        Tax capacities ``w_i - pi_i``.
    fns : sequence of DisutilityFn
        Disutility of each region.
    cfg : SolverConfig, optional

    Returns
    -------
    SolveResult
        Final weights, rule, fairness gaps and a trace of
        ``(iteration, max|eta|, |delta alpha|, step)`` rows.
    """
    cfg = cfg or SolverConfig()
    eps = _check_eps(eps)
    n = eps.shape[1]
    if n < 2:
        raise InputError("the solver needs at least two regions")
    caps = np.asarray(caps, dtype=float)
    if caps.shape != (n,) or len(fns) != n:
        raise InputError("caps and disutilities must match the residual columns")
    s = eps.sum(axis=1)
    if s.max() > caps.sum() * (1 + 1e-12):
        raise CapacityError(
            f"pool cannot absorb worst loss: max residual {s.max():.6g} exceeds "
            f"total capacity {caps.sum():.6g}")
    hist = ResidualHistogram.from_samples(s, cfg.bins)
    mean_s = float(s.mean())
    mean_eps = eps.mean(axis=0)
    m = cfg.resolved_m(n)

    alpha = _initial_alpha(n, cfg)
    if mean_s <= 0:
        rule = PiecewiseTaxRule(alpha, fns, caps)
        gap = FairnessGap(np.zeros(n), mean_eps, np.zeros(n), 0.0)
        return SolveResult(alpha=rule.alpha, rule=rule, gap=gap, converged=True,
                           reason="no residual loss", iterations=0)
    step = cfg.step_size if cfg.step_size is not None else 0.1 / mean_s

    trace = []
    converged, reason = False, "max_iter"
    prev_gap = math.inf
    best_gap = math.inf
    worse_streak = 0
    since_best = 0
    it = 0
    for it in range(1, cfg.max_iter + 1):
        alpha = alpha / alpha.sum()
        rule = PiecewiseTaxRule(alpha, fns, caps)
        eta = mean_eps - expected_participation(hist, rule)
        max_gap = float(np.max(np.abs(eta)))

        if max_gap <= cfg.fairness_tol * mean_s:
            trace.append((it, max_gap, 0.0, step))
            converged, reason = True, "fairness"
            break

        new = alpha.copy()
        for lo, hi in extreme_pairs(eta, m):
            d = step * min(abs(eta[lo]), abs(eta[hi]))
            new[lo] += d
            new[hi] -= d
        new = np.maximum(new, ALPHA_FLOOR)
        new /= new.sum()
        dalpha = float(np.linalg.norm(new - alpha))
        trace.append((it, max_gap, dalpha, step))
        alpha = new

        if dalpha < cfg.delta:
            converged, reason = True, "delta"
            break
        if max_gap > prev_gap:
            worse_streak += 1
            if worse_streak >= cfg.patience:
                step *= 0.5
                worse_streak = 0
                logger.debug("iteration %d: gap grew %d times, step halved to %g",
                             it, cfg.patience, step)
        else:
            worse_streak = 0
        prev_gap = max_gap
        if max_gap < best_gap:
            best_gap, since_best = max_gap, 0
        else:
            since_best += 1
            if cfg.stall and since_best >= cfg.stall:
                step *= 0.5
                since_best = 0
                logger.debug("iteration %d: no new best gap in %d steps, step halved to %g",
                             it, cfg.stall, step)

    rule = PiecewiseTaxRule(alpha, fns, caps)
    gap = fairness_gap(eps, rule, hist=hist)
    if not converged:
        logger.warning("AFPO solver stopped at max_iter=%d with max|eta|=%.3g",
                       cfg.max_iter, gap.max_abs)
    return SolveResult(alpha=rule.alpha, rule=rule, gap=gap, converged=converged,
                       reason=reason, iterations=it, trace=trace)
