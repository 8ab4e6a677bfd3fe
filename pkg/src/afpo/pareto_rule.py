"""Pareto-optimal taxation rules parameterized by a weight vector.

For weights ``alpha`` on the open simplex, region ``i`` pays

    T_i(lam) = clamp(I_i(lam / alpha_i), 0, w_i - pi_i)

at multiplier ``lam``. Summing over regions gives the aggregate ``s(lam)``,
a continuous nondecreasing function; the rule at a residual loss ``s`` is
``T(Lambda(s))`` with ``Lambda`` the (left-continuous) inverse of ``s(lam)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .disutility import CapDomain, DisutilityFn
from .errors import InputError

__all__ = ["PiecewiseTaxRule", "KKTReport", "as_simplex", "kkt_check"]

BRACKET_PAD = 1e-6
LAMBDA_RTOL = 1e-12


def as_simplex(alpha) -> np.ndarray:
    """Validate strictly positive weights and rescale them to sum to one."""
    a = np.asarray(alpha, dtype=float)
    if a.ndim != 1 or a.size == 0:
        raise InputError("weights must be a non-empty vector")
    if np.any(~(a > 0)) or not np.all(np.isfinite(a)):
        raise InputError("weights must be finite and strictly positive")
    return a / a.sum()


@dataclass(frozen=True)
class KKTReport:
    worst: float
    n_violations: int
    tol: float
    worst_point: int | None = None
    per_point: np.ndarray = field(default=None, repr=False)

    @property
    def passed(self) -> bool:
        return self.n_violations == 0


def kkt_check(alpha, fns: Sequence[DisutilityFn], caps, T, tol: float = 1e-8,
              atol: float = 1e-10) -> KKTReport:
    """Check the Pareto first-order conditions of an allocation matrix ``T``.

    ``T`` has one row per aggregate loss level. The multiplier is inferred
    from the interior regions of each row, so the check does not depend on
    how ``T`` was produced.
    """
    alpha = np.asarray(alpha, dtype=float)
    caps = np.asarray(caps, dtype=float)
    T = np.atleast_2d(np.asarray(T, dtype=float))
    n = alpha.size
    scale = np.maximum(caps, 1.0)
    at_zero = T <= atol * scale
    at_cap = T >= caps - atol * scale
    interior = ~(at_zero | at_cap)

    bound_break = (T < -atol * scale) | (T > caps + atol * scale)
    # weighted marginals in log space: log(alpha_i v_i'(T_i))
    m = np.empty_like(T)
    for i in range(n):
        m[:, i] = np.log(alpha[i]) + fns[i].log_marginal(np.clip(T[:, i], 0.0, caps[i]))

    big = np.inf
    m_int_lo = np.where(interior, m, big).min(axis=1)
    m_int_hi = np.where(interior, m, -big).max(axis=1)
    m_zero_lo = np.where(at_zero, m, big).min(axis=1)
    m_cap_hi = np.where(at_cap, m, -big).max(axis=1)
    has_int = interior.any(axis=1)

    with np.errstate(invalid="ignore"):
        # interior regions must share one multiplier
        spread = np.where(has_int, np.expm1(m_int_hi - m_int_lo), 0.0)
        # zero payers need a marginal at or above it, capped payers at or below it
        ref_hi = np.where(has_int, m_int_hi, m_cap_hi)
        ref_lo = np.where(has_int, m_int_lo, m_zero_lo)
        zero_gap = np.where(np.isfinite(m_zero_lo) & np.isfinite(ref_hi),
                            np.expm1(ref_hi - m_zero_lo), 0.0)
        cap_gap = np.where(np.isfinite(m_cap_hi) & np.isfinite(ref_lo),
                           -np.expm1(ref_lo - m_cap_hi), 0.0)
    worst_per_row = np.maximum(spread, np.maximum(zero_gap, 0.0))
    worst_per_row = np.maximum(worst_per_row, np.maximum(cap_gap, 0.0))
    worst_per_row = np.where(bound_break.any(axis=1), np.inf, worst_per_row)

    j = int(np.argmax(worst_per_row)) if worst_per_row.size else 0
    worst = float(worst_per_row[j]) if worst_per_row.size else 0.0
    return KKTReport(
        worst=worst,
        n_violations=int(np.sum(worst_per_row > tol)),
        tol=tol,
        worst_point=j if worst > tol else None,
        per_point=worst_per_row,
    )


class PiecewiseTaxRule:
    """The Pareto-optimal taxation rule for fixed weights.

    Parameters
    ----------
    alpha : array_like
        Positive weights, rescaled onto the simplex.
    fns : sequence of DisutilityFn
        One disutility per region.
    caps : array_like
        Tax capacities ``w_i - pi_i`` (all > 0).
    """

    def __init__(self, alpha, fns: Sequence[DisutilityFn], caps):
        self.alpha = as_simplex(alpha)
        self.fns = tuple(fns)
        self.caps = np.asarray(caps, dtype=float)
        n = self.alpha.size
        if len(self.fns) != n or self.caps.shape != (n,):
            raise InputError("weights, disutilities and caps must have the same length")
        if np.any(~(self.caps > 0)):
            raise InputError("every region needs a positive tax capacity w - pi")
        self._domains = [CapDomain(0.0, float(c)) for c in self.caps]
        # all-CARA rules vectorize across regions
        self._cara_gamma = (np.array([f.gamma for f in self.fns])
                            if all(f.kind == "cara" for f in self.fns) else None)
        # multipliers are handled in log space; exp(w / gamma) overflows for large caps
        self._log_alpha = np.log(self.alpha)
        self.log_lam_entry = np.array([la + float(f.log_marginal(0.0))
                                       for la, f in zip(self._log_alpha, self.fns)])
        self.log_lam_max = np.array([la + float(f.log_marginal(c))
                                     for la, f, c in zip(self._log_alpha, self.fns, self.caps)])
        self.order = np.argsort(self.log_lam_entry, kind="stable")
        self.support_hi = float(self.caps.sum())
        self.layering = self._participation_log(self.log_lam_entry).sum(axis=-1)

    @property
    def lam_entry(self) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.exp(self.log_lam_entry)

    @property
    def lam_max(self) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.exp(self.log_lam_max)

    @property
    def n(self) -> int:
        return self.alpha.size

    def with_alpha(self, alpha) -> "PiecewiseTaxRule":
        return PiecewiseTaxRule(alpha, self.fns, self.caps)

    # -- lambda parameterization ---------------------------------------------

    def _participation_log(self, log_lam) -> np.ndarray:
        log_lam = np.asarray(log_lam, dtype=float)
        if self._cara_gamma is not None:
            x = self._cara_gamma * (log_lam[..., None] - self._log_alpha)
            return np.clip(x, 0.0, self.caps)
        out = np.empty(log_lam.shape + (self.n,))
        for i, (la, f, dom) in enumerate(zip(self._log_alpha, self.fns, self._domains)):
            out[..., i] = f.inverse_log_marginal(log_lam - la, dom)
        return out

    def participation_at_lambda(self, lam) -> np.ndarray:
        lam = np.asarray(lam, dtype=float)
        if np.any(~(lam > 0)):
            raise InputError("multiplier must be > 0")
        return self._participation_log(np.log(lam))

    def aggregate_at_lambda(self, lam) -> np.ndarray:
        return self.participation_at_lambda(lam).sum(axis=-1)

    def _dT_dloglam(self, T) -> np.ndarray:
        """Derivative of each interior contribution with respect to ``log(lam)``."""
        d = np.zeros_like(T)
        for i, (f, c) in enumerate(zip(self.fns, self.caps)):
            t = T[..., i]
            inner = (t > 0) & (t < c)
            if np.any(inner):
                # v'(T) = lam / alpha  =>  dT/dlog(lam) = v'(T) / v''(T)
                d[..., i][inner] = f.marginal(t[inner]) / f.second_marginal(t[inner])
        return d

    def _check_support(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        hi = self.support_hi
        if np.any(np.isnan(s)) or np.any(s < 0) or np.any(s > hi * (1 + 1e-12) + 1e-12):
            raise InputError(f"residual loss outside the rule support [0, {hi}]")
        return np.clip(s, 0.0, hi)

    def invert_log_lambda(self, s) -> np.ndarray:
        """``log Lambda(s)``: the smallest log-multiplier whose aggregate reaches ``s``.

        Vectorized bisection on ``log(lam)`` to relative tolerance 1e-12 in
        ``lam``, followed by one Newton polish on the smooth piece found.
        """
        s = self._check_support(s)
        scalar = s.ndim == 0
        s = np.atleast_1d(s)
        lo0 = float(self.log_lam_entry.min())
        hi0 = float(self.log_lam_max.max())
        lo = np.full(s.shape, lo0 + np.log1p(-BRACKET_PAD))
        hi = np.full(s.shape, hi0 + np.log1p(BRACKET_PAD))
        n_iter = int(np.ceil(np.log2((hi0 - lo0 + 2 * BRACKET_PAD) / LAMBDA_RTOL))) + 1 if s.size else 0
        for _ in range(n_iter):
            mid = 0.5 * (lo + hi)
            below = self._participation_log(mid).sum(axis=-1) < s
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        x = hi

        T = self._participation_log(x)
        resid = s - T.sum(axis=-1)
        slope = self._dT_dloglam(T).sum(axis=-1)
        ok = slope > 0
        if np.any(ok):
            step = np.where(ok, resid / np.where(ok, slope, 1.0), 0.0)
            x = np.where(ok, np.clip(x + step, lo, hi), x)

        x = np.where(s <= 0, lo0, x)
        x = np.where(s >= self.support_hi, hi0, x)
        return x[0] if scalar else x

    def invert_lambda(self, s) -> np.ndarray:
        """``Lambda(s)``; see :meth:`invert_log_lambda` (may overflow to inf for huge caps)."""
        with np.errstate(over="ignore"):
            return np.exp(self.invert_log_lambda(s))

    # -- evaluation ------------------------------------------------------------

    def evaluate(self, s) -> np.ndarray:
        """Contributions ``T_i(s)``; shape ``s.shape + (n,)``."""
        return self._participation_log(self.invert_log_lambda(s))

    def evaluate_with_lambda(self, s):
        x = self.invert_log_lambda(s)
        with np.errstate(over="ignore"):
            return self._participation_log(x), np.exp(x)

    def relative_participation(self, s) -> np.ndarray:
        """``T_i(s) / s`` (zero at ``s == 0``)."""
        s = np.asarray(s, dtype=float)
        T = self.evaluate(s)
        with np.errstate(invalid="ignore", divide="ignore"):
            t = T / s[..., None]
        return np.where(s[..., None] > 0, t, 0.0)

    def kkt_verify(self, grid, allocation=None, tol: float = 1e-8) -> KKTReport:
        """Check the Pareto conditions on ``grid``.

        ``allocation`` may be a callable ``s -> T`` or a precomputed matrix;
        by default the rule itself is checked.
        """
        grid = self._check_support(grid)
        if allocation is None:
            T = self.evaluate(grid)
        elif callable(allocation):
            T = np.asarray(allocation(grid), dtype=float)
        else:
            T = np.asarray(allocation, dtype=float)
        return kkt_check(self.alpha, self.fns, self.caps, T, tol=tol)

    def grid_table(self, points: int = 512):
        """``(s, T, Lambda)`` on an equally spaced grid over the support."""
        s = np.linspace(0.0, self.support_hi, points)
        T, lam = self.evaluate_with_lambda(s)
        return s, T, lam

    def __repr__(self) -> str:
        return f"PiecewiseTaxRule(n={self.n}, support=[0, {self.support_hi:.6g}])"
