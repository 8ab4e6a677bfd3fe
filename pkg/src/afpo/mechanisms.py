"""Comparison of the four loss-financing mechanisms.

Every mechanism is scored on the cash a region pays out in a scenario:

* baseline       X_i
* insurance      pi_i + eps_i 1{default} - c_i (k - S) 1{favorable}
* pure sharing   T_i(S) under a rule fitted on total losses
* hybrid         pi_i + T_i(S_eps) 1{default} - c_i (k - S) 1{favorable}

and a disutility ``v_i`` of that outlay.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .disutility import DisutilityFn
from .errors import InputError
from .insurance import PremiumSchedule, ScenarioClass, Settlement
from .pareto_rule import PiecewiseTaxRule

__all__ = [
    "MechanismKind",
    "OutlayTable",
    "ClassSummary",
    "TransferReport",
    "outlay_disutility",
    "evaluate_mechanism",
    "expected_disutility_by_class",
    "event_transfers",
    "transfers_from_taxes",
]


class MechanismKind(str, Enum):
    BASELINE = "baseline"
    INSURANCE = "insurance"
    PURE_SHARING = "pure_sharing"
    HYBRID = "hybrid"

    @property
    def shares_losses(self) -> bool:
        return self in (MechanismKind.PURE_SHARING, MechanismKind.HYBRID)


@dataclass(frozen=True)
class OutlayTable:
    kind: MechanismKind
    outlay: np.ndarray
    disutility: np.ndarray
    cls: np.ndarray


def outlay_disutility(fn: DisutilityFn, x) -> np.ndarray:
    """``v(x)`` for an outlay; CARA is extended to negative outlays (net receipts)."""
    x = np.asarray(x, dtype=float)
    if fn.kind == "cara":
        return fn.gamma * np.exp(x / fn.gamma)
    return fn.value(x)


def _default_fns(n: int) -> list[DisutilityFn]:
    return [DisutilityFn.cara(1.0)] * n


def evaluate_mechanism(kind, settlement: Settlement, sched: PremiumSchedule,
                       rule: PiecewiseTaxRule | None = None,
                       fns: Sequence[DisutilityFn] | None = None) -> OutlayTable:
    """Outlays and disutilities of one mechanism over settled scenarios.

    ``rule`` must be fitted on total losses for pure sharing and on residual
    claims for the hybrid mechanism. ``fns`` defaults to ``v(l) = e^l`` for
    every region.
    """
    kind = MechanismKind(kind)
    X = settlement.X
    n = X.shape[1]
    fns = list(fns) if fns is not None else _default_fns(n)
    if len(fns) != n:
        raise InputError("one disutility per region is required")
    if kind.shares_losses and rule is None:
        raise InputError(f"mechanism {kind.value} needs a fitted taxation rule")
    if rule is not None and rule.n != n:
        raise InputError("rule and settlement cover different regions")

    dft = settlement.cls == ScenarioClass.DEFAULT
    if kind is MechanismKind.BASELINE:
        outlay = X.copy()
    elif kind is MechanismKind.PURE_SHARING:
        outlay = rule.evaluate(settlement.S)
    else:
        # both insured mechanisms share this expression off default
        outlay = sched.pi[None, :] - settlement.surplus
        if np.any(dft):
            if kind is MechanismKind.INSURANCE:
                extra = settlement.eps[dft]
            else:
                extra = rule.evaluate(settlement.S_eps[dft])
            outlay[dft] = outlay[dft] + extra
    dis = np.empty_like(outlay)
    for i, fn in enumerate(fns):
        dis[:, i] = outlay_disutility(fn, outlay[:, i])
    return OutlayTable(kind=kind, outlay=outlay, disutility=dis, cls=settlement.cls)


@dataclass(frozen=True)
class ClassSummary:
    """Class-conditional means; classes without scenarios hold NaN and are flagged absent."""

    kinds: tuple[MechanismKind, ...]
    mean_outlay: np.ndarray       # (mechanism, class, region)
    mean_disutility: np.ndarray   # (mechanism, class, region)
    counts: dict[str, int]

    @property
    def absent(self) -> dict[str, bool]:
        return {k: v == 0 for k, v in self.counts.items()}

    def rows(self, region_ids: Sequence[str] | None = None):
        """Flat ``(mechanism, class, region, mean_outlay, mean_disutility, n_scenarios)`` rows."""
        n = self.mean_outlay.shape[2]
        ids = list(region_ids) if region_ids is not None else [str(i) for i in range(n)]
        for m, kind in enumerate(self.kinds):
            for c in ScenarioClass:
                cnt = self.counts[c.label]
                for i in range(n):
                    yield (kind.value, c.label, ids[i], float(self.mean_outlay[m, c, i]),
                           float(self.mean_disutility[m, c, i]), cnt)


def expected_disutility_by_class(tables: Sequence[OutlayTable]) -> ClassSummary:
    if not tables:
        raise InputError("no mechanism tables to summarize")
    cls = tables[0].cls
    for t in tables[1:]:
        if not np.array_equal(t.cls, cls):
            raise InputError("mechanism tables were built on different scenario sets")
    n = tables[0].outlay.shape[1]
    out = np.full((len(tables), 3, n), np.nan)
    dis = np.full((len(tables), 3, n), np.nan)
    counts = {}
    for c in ScenarioClass:
        mask = cls == c
        counts[c.label] = int(mask.sum())
        if not mask.any():
            continue
        for m, t in enumerate(tables):
            out[m, c] = t.outlay[mask].mean(axis=0)
            dis[m, c] = t.disutility[mask].mean(axis=0)
    return ClassSummary(kinds=tuple(t.kind for t in tables), mean_outlay=out,
                        mean_disutility=dis, counts=counts)


@dataclass(frozen=True)
class TransferReport:
    """Per-region flows in one event; ``net > 0`` pays into the pool, ``net < 0`` receives."""

    epsilon: np.ndarray
    tax: np.ndarray
    net: np.ndarray
    self_borne: np.ndarray  # tax / eps for affected regions, NaN elsewhere

    @property
    def imbalance(self) -> float:
        return float(self.net.sum())

    @property
    def payers(self) -> np.ndarray:
        return np.flatnonzero(self.net > 0)

    @property
    def receivers(self) -> np.ndarray:
        return np.flatnonzero(self.net < 0)


def transfers_from_taxes(eps, tax) -> TransferReport:
    eps = np.asarray(eps, dtype=float)
    tax = np.asarray(tax, dtype=float)
    if eps.shape != tax.shape or eps.ndim != 1:
        raise InputError("residuals and taxes must be vectors of equal length")
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        share = np.where(eps > 0, tax / eps, np.nan)
    return TransferReport(epsilon=eps, tax=tax, net=tax - eps, self_borne=share)


def event_transfers(eps, rule: PiecewiseTaxRule, kind=MechanismKind.HYBRID) -> TransferReport:
    """Who pays whom in a single event under a sharing mechanism.

    For pure sharing pass the event's losses as ``eps``.
    """
    kind = MechanismKind(kind)
    if not kind.shares_losses:
        raise InputError(f"mechanism {kind.value} has no inter-regional transfers")
    eps = np.asarray(eps, dtype=float)
    if eps.shape != (rule.n,):
        raise InputError("event vector does not match the rule's regions")
    tax = rule.evaluate(float(eps.sum()))
    return transfers_from_taxes(eps, tax)
