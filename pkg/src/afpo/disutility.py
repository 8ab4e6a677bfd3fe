"""Disutility functions of the regions and their marginal calculus.

Two families are supported:

* ``cara``  -- ``v(x) = gamma * exp(x / gamma)`` with risk tolerance ``gamma``.
* ``power`` -- the negated power utility ``u(z) = (b + z)**c`` read at the
  region's post-premium wealth: ``v(x) = -(b + anchor - x)**c`` where
  ``anchor = w - pi`` is the tax capacity.

Every method accepts scalars or numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, InputError

__all__ = [
    "CapDomain",
    "DisutilityFn",
    "ValidationReport",
    "validate_assumption1",
]


@dataclass(frozen=True)
class CapDomain:
    """Range ``[lo, hi]`` of admissible tax contributions of one region."""

    lo: float = 0.0
    hi: float = np.inf

    def __post_init__(self):
        if not self.hi >= self.lo:
            raise InputError(f"cap domain upper bound {self.hi} below lower bound {self.lo}")


@dataclass(frozen=True)
class DisutilityFn:
    """A strictly increasing, strictly convex disutility ``v``.

    Use the :meth:`cara` and :meth:`power` constructors rather than the raw
    fields.
    """

    kind: str
    gamma: float = 1.0
    b: float = 1.0
    c: float = 0.5
    anchor: float = float("nan")

    def __post_init__(self):
        if self.kind == "cara":
            if not self.gamma > 0:
                raise InputError(f"CARA risk tolerance must be > 0, got {self.gamma}")
        elif self.kind == "power":
            if not self.b > 0:
                # b = 0 gives v'(0) = 0 at zero wealth, which breaks the entry thresholds.
                raise InputError(f"power shift b must be > 0, got {self.b}")
            if not 0 < self.c < 1:
                raise InputError(f"power exponent c must lie in (0, 1), got {self.c}")
            if not np.isfinite(self.anchor) or self.anchor < 0:
                raise InputError("power disutility needs a finite anchor w - pi >= 0")
        else:
            raise InputError(f"unknown disutility kind {self.kind!r}")

    @classmethod
    def cara(cls, gamma: float = 1.0) -> "DisutilityFn":
        return cls(kind="cara", gamma=float(gamma))

    @classmethod
    def power(cls, b: float, c: float, anchor: float) -> "DisutilityFn":
        return cls(kind="power", b=float(b), c=float(c), anchor=float(anchor))

    def with_anchor(self, anchor: float) -> "DisutilityFn":
        """Return a copy bound to a region's tax capacity (no-op for CARA)."""
        if self.kind == "cara":
            return self
        return DisutilityFn.power(self.b, self.c, anchor)

    # -- domain -------------------------------------------------------------

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x < 0) or np.any(np.isnan(x)):
            raise DomainError("disutility evaluated at a negative contribution")
        if self.kind == "power" and np.any(x >= self.b + self.anchor):
            raise DomainError("power disutility evaluated beyond b + anchor")
        return x

    # -- calculus -----------------------------------------------------------

    def value(self, x):
        x = self._check(x)
        if self.kind == "cara":
            return self.gamma * np.exp(x / self.gamma)
        return -((self.b + self.anchor - x) ** self.c)

    def marginal(self, x):
        x = self._check(x)
        if self.kind == "cara":
            return np.exp(x / self.gamma)
        return self.c * (self.b + self.anchor - x) ** (self.c - 1.0)

    def log_marginal(self, x):
        """``log v'(x)``; finite where ``v'`` itself would overflow."""
        x = self._check(x)
        if self.kind == "cara":
            return x / self.gamma
        return np.log(self.c) + (self.c - 1.0) * np.log(self.b + self.anchor - x)

    def second_marginal(self, x):
        x = self._check(x)
        if self.kind == "cara":
            return np.exp(x / self.gamma) / self.gamma
        return self.c * (1.0 - self.c) * (self.b + self.anchor - x) ** (self.c - 2.0)

    def inverse_marginal(self, y, cap: CapDomain = CapDomain()):
        """Contribution ``x`` with ``v'(x) = y``, clamped to ``cap``.

        Outside ``[v'(cap.lo), v'(cap.hi)]`` the clamp returns the nearest
        bound, which is exactly the corner behaviour of a Pareto rule.
        """
        y = np.asarray(y, dtype=float)
        if np.any(~(y > 0)):
            raise InputError("inverse marginal needs strictly positive marginal values")
        if self.kind == "cara":
            x = self.gamma * np.log(y)
        else:
            x = self.b + self.anchor - (y / self.c) ** (1.0 / (self.c - 1.0))
        return np.clip(x, cap.lo, cap.hi)

    def inverse_log_marginal(self, log_y, cap: CapDomain = CapDomain()):
        """:meth:`inverse_marginal` taking ``log y``."""
        log_y = np.asarray(log_y, dtype=float)
        if np.any(np.isnan(log_y)):
            raise InputError("inverse marginal needs a finite log marginal value")
        if self.kind == "cara":
            x = self.gamma * log_y
        else:
            with np.errstate(over="ignore"):
                x = self.b + self.anchor - np.exp((log_y - np.log(self.c)) / (self.c - 1.0))
        return np.clip(x, cap.lo, cap.hi)

    def to_dict(self) -> dict:
        if self.kind == "cara":
            return {"kind": "cara", "gamma": self.gamma}
        return {"kind": "power", "b": self.b, "c": self.c}

    @classmethod
    def from_dict(cls, d: dict, anchor: float | None = None) -> "DisutilityFn":
        d = dict(d)
        kind = d.pop("kind", None)
        if kind == "cara":
            fn = cls.cara(d.pop("gamma", 1.0))
        elif kind == "power":
            if anchor is None:
                anchor = d.pop("anchor", None)
            if anchor is None:
                raise InputError("power disutility needs an anchor (w - pi)")
            fn = cls.power(d.pop("b"), d.pop("c"), anchor)
        else:
            raise InputError(f"unknown disutility kind {kind!r}")
        d.pop("anchor", None)
        if d:
            raise InputError(f"unknown disutility keys: {sorted(d)}")
        return fn


@dataclass
class ValidationReport:
    passed: bool
    violations: list[str] = field(default_factory=list)


def validate_assumption1(fn: DisutilityFn, cap: CapDomain) -> ValidationReport:
    """Check the standing assumption: positive marginal at zero, non-empty capacity."""
    violations = []
    if not cap.hi > cap.lo:
        violations.append("empty tax capacity")
    try:
        if not float(fn.marginal(0.0)) > 0:
            violations.append("marginal disutility at zero is not positive")
    except DomainError as exc:
        violations.append(f"marginal undefined at zero: {exc}")
    if fn.kind == "power" and cap.hi > fn.anchor + fn.b:
        violations.append("capacity exceeds the power utility's domain")
    return ValidationReport(passed=not violations, violations=violations)
