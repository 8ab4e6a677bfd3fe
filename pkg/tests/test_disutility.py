import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from afpo.disutility import CapDomain, DisutilityFn, validate_assumption1
from afpo.errors import DomainError, InputError

cara_gamma = st.floats(0.1, 10.0)
power_params = st.tuples(st.floats(0.1, 5.0), st.floats(0.05, 0.95), st.floats(0.5, 20.0))


def test_cara_values():
    assert DisutilityFn.cara(1).value(0.0) == pytest.approx(1.0)
    assert DisutilityFn.cara(2).value(2.0) == pytest.approx(2 * math.e)
    assert DisutilityFn.cara(1).value(1.0) == pytest.approx(math.e)


def test_cara_marginals():
    assert DisutilityFn.cara(2).marginal(0.0) == pytest.approx(1.0)
    assert DisutilityFn.cara(2).marginal(2.0) == pytest.approx(math.e)
    assert DisutilityFn.cara(1).marginal(math.log(3)) == pytest.approx(3.0)


def test_inverse_marginal_clamps():
    assert DisutilityFn.cara(2).inverse_marginal(math.e, CapDomain(0, 10)) == pytest.approx(2.0)
    assert DisutilityFn.cara(1).inverse_marginal(0.5, CapDomain(0, 10)) == 0.0
    assert DisutilityFn.cara(1).inverse_marginal(math.exp(20), CapDomain(0, 4.5)) == 4.5


@pytest.mark.parametrize("y", [0.0, -1.0, float("nan")])
def test_inverse_marginal_rejects_nonpositive(y):
    with pytest.raises(InputError):
        DisutilityFn.cara(1).inverse_marginal(y)


def test_domain_errors():
    with pytest.raises(DomainError):
        DisutilityFn.cara(1).value(-0.1)
    fn = DisutilityFn.power(1.0, 0.5, anchor=3.0)
    with pytest.raises(DomainError):
        fn.marginal(4.0)


@pytest.mark.parametrize("kw", [dict(b=0.0, c=0.5), dict(b=1.0, c=1.0), dict(b=1.0, c=0.0)])
def test_power_rejects_bad_shape(kw):
    with pytest.raises(InputError):
        DisutilityFn.power(anchor=1.0, **kw)


def test_cara_rejects_nonpositive_tolerance():
    with pytest.raises(InputError):
        DisutilityFn.cara(0.0)


def test_assumption1_reports():
    assert validate_assumption1(DisutilityFn.cara(1), CapDomain(0, 4.5)).passed
    assert validate_assumption1(DisutilityFn.power(1, 0.5, anchor=3.0), CapDomain(0, 3)).passed
    rep = validate_assumption1(DisutilityFn.cara(1), CapDomain(0, 0.0))
    assert not rep.passed
    assert "empty tax capacity" in rep.violations


def test_power_marginal_matches_utility_derivative():
    # v(x) = -u(w - pi - x) with u(y) = (b + y)^c, so v'(x) = u'(w - pi - x)
    b, c, anchor = 1.0, 0.5, 3.0
    fn = DisutilityFn.power(b, c, anchor)
    assert fn.marginal(0.0) == pytest.approx(c * (b + anchor) ** (c - 1))


def test_serialization_round_trip():
    for fn in (DisutilityFn.cara(1.7), DisutilityFn.power(1.0, 0.3, anchor=5.0)):
        assert DisutilityFn.from_dict(fn.to_dict(), anchor=fn.anchor if fn.kind == "power" else None) == fn
    with pytest.raises(InputError):
        DisutilityFn.from_dict({"kind": "cara", "gamma": 1, "extra": 2})


def _fns():
    return st.one_of(
        cara_gamma.map(DisutilityFn.cara),
        power_params.map(lambda t: DisutilityFn.power(*t)),
    )


def _upper(fn):
    return 30.0 if fn.kind == "cara" else 0.999 * (fn.b + fn.anchor)


@settings(max_examples=60, deadline=None)
@given(_fns(), st.lists(st.integers(0, 10_000), min_size=2, max_size=30, unique=True))
def test_strict_monotonicity(fn, ticks):
    x = np.sort(np.array(ticks)) / 10_000 * _upper(fn)
    v, m = fn.value(x), fn.marginal(x)
    assert np.all(np.diff(v) > 0)
    assert np.all(np.diff(m) > 0)


@settings(max_examples=100, deadline=None)
@given(_fns(), st.floats(0.0, 1.0))
def test_inverse_round_trip(fn, frac):
    hi = _upper(fn) * 0.9
    cap = CapDomain(0.0, hi)
    y = fn.marginal(0.0) + frac * (fn.marginal(hi) - fn.marginal(0.0))
    x = fn.inverse_marginal(y, cap)
    assert float(fn.marginal(x)) == pytest.approx(y, rel=1e-10)


@settings(max_examples=100, deadline=None)
@given(_fns(), st.floats(0.01, 0.9))
def test_marginal_finite_difference(fn, frac):
    x = frac * _upper(fn)
    h = 1e-5 * max(1.0, x)
    fd = (fn.value(x + h) - fn.value(x - h)) / (2 * h)
    assert abs(fn.marginal(x) - fd) <= 1e-6 * fn.marginal(x)
