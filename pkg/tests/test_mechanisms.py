import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from afpo.disutility import DisutilityFn
from afpo.errors import InputError
from afpo.insurance import InsurerConfig, ScenarioClass, compute_premiums, settle_batch
from afpo.mechanisms import (MechanismKind, evaluate_mechanism, event_transfers,
                             expected_disutility_by_class, outlay_disutility, transfers_from_taxes)
from afpo.pareto_rule import PiecewiseTaxRule


def cara_rule(alpha, caps, gammas=None):
    gammas = gammas or [1.0] * len(alpha)
    return PiecewiseTaxRule(alpha, [DisutilityFn.cara(g) for g in gammas], caps)


@pytest.fixture(scope="module")
def settled():
    rng = np.random.default_rng(4)
    X = rng.beta(0.3, 0.5, (4000, 3)) * [2.0, 3.0, 4.0]
    cfg = InsurerConfig(theta=0.3, capital=3.5)
    sched = compute_premiums(X, cfg)
    return X, sched, settle_batch(X, sched, cfg)


def test_transfer_example():
    r = transfers_from_taxes([4.0, 0.0], [1.0, 3.0])
    np.testing.assert_allclose(r.net, [-3.0, 3.0])
    assert r.imbalance == 0.0
    assert list(r.payers) == [1] and list(r.receivers) == [0]
    assert r.self_borne[0] == pytest.approx(0.25) and np.isnan(r.self_borne[1])


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0, 2), min_size=3, max_size=3), st.floats(0.1, 0.8))
def test_event_transfers_zero_sum(eps, a1):
    rule = cara_rule([a1, (1 - a1) / 2, (1 - a1) / 2], [3.0, 3.0, 3.0], [1.0, 2.0, 0.5])
    r = event_transfers(eps, rule)
    assert abs(r.imbalance) <= 1e-9 * max(1.0, sum(eps))
    assert np.all(r.tax >= -1e-12)


def test_unaffected_regions_only_pay():
    rule = cara_rule([0.25] * 4, [5.0] * 4)
    r = event_transfers([3.0, 1.0, 0.0, 0.0], rule, MechanismKind.PURE_SHARING)
    assert np.all(r.net[2:] > 0)
    assert r.net[0] < 0
    with pytest.raises(InputError):
        event_transfers([1.0, 0, 0, 0], rule, "insurance")


def test_hybrid_matches_insurance_off_default(settled):
    X, sched, st_ = settled
    rule = cara_rule([1 / 3] * 3, [2.0, 3.0, 4.0])
    ins = evaluate_mechanism("insurance", st_, sched)
    hyb = evaluate_mechanism("hybrid", st_, sched, rule=rule)
    off = st_.cls != ScenarioClass.DEFAULT
    assert off.any() and (~off).any()
    np.testing.assert_array_equal(ins.outlay[off], hyb.outlay[off])
    dft = ~off
    # in default the hybrid replaces individual residuals by pooled taxes
    np.testing.assert_allclose(hyb.outlay[dft].sum(axis=1), ins.outlay[dft].sum(axis=1), rtol=1e-10)


def test_baseline_and_pure_sharing(settled):
    X, sched, st_ = settled
    base = evaluate_mechanism("baseline", st_, sched)
    np.testing.assert_array_equal(base.outlay, X)
    rule = cara_rule([1 / 3] * 3, [2.0, 3.0, 4.0])
    pure = evaluate_mechanism(MechanismKind.PURE_SHARING, st_, sched, rule=rule)
    np.testing.assert_allclose(pure.outlay.sum(axis=1), X.sum(axis=1), rtol=1e-10)
    np.testing.assert_allclose(base.disutility, np.exp(X))
    with pytest.raises(InputError):
        evaluate_mechanism("hybrid", st_, sched)


def test_insurance_outlays(settled):
    X, sched, st_ = settled
    ins = evaluate_mechanism("insurance", st_, sched)
    mid = st_.cls == ScenarioClass.INTERMEDIATE
    np.testing.assert_allclose(ins.outlay[mid], np.broadcast_to(sched.pi, ins.outlay[mid].shape))


def test_outlay_disutility_negative_cara():
    assert outlay_disutility(DisutilityFn.cara(2.0), -2.0) == pytest.approx(2 * np.exp(-1))


def test_class_summary_and_absent_class():
    X = np.array([[0.1, 0.1], [0.2, 0.3]])
    cfg = InsurerConfig(theta=0.3, capital=10.0)
    sched = compute_premiums(X, cfg)
    st_ = settle_batch(X, sched, cfg)
    tables = [evaluate_mechanism(k, st_, sched) for k in ("baseline", "insurance")]
    summ = expected_disutility_by_class(tables)
    assert summ.absent["default"]
    assert sum(summ.counts.values()) == 2
    assert np.isnan(summ.mean_outlay[:, ScenarioClass.DEFAULT]).all()
    rows = list(summ.rows(["a", "b"]))
    assert len(rows) == 2 * 3 * 2
    assert rows[0][:3] == ("baseline", ScenarioClass(0).label, "a")


def test_class_summary_rejects_mismatch(settled):
    X, sched, st_ = settled
    t1 = evaluate_mechanism("baseline", st_, sched)
    other = settle_batch(X[:10], sched, InsurerConfig(theta=0.3, capital=3.5))
    t2 = evaluate_mechanism("baseline", other, sched)
    with pytest.raises(InputError):
        expected_disutility_by_class([t1, t2])
