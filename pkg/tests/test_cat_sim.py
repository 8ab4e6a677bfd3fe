import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from afpo.cat_sim import (RegionGeo, StormModel, beta_quantile_bisect, build_correlation,
                          identity_correlation, min_distance, repair_correlation, sample_losses,
                          sample_uniforms, severity_params)
from afpo.errors import InputError
from afpo.fixtures import STORM_PATH, fixture_path
from afpo.io import load_regions

STORM = StormModel(path=STORM_PATH)


@pytest.mark.parametrize("pt, d", [
    ((0.0, 1.0), 1.0),      # above the interior of the first segment
    ((-3.0, 4.0), 5.0),     # beyond the start: distance to the endpoint
    ((5.0, 0.0), 0.0),      # on the path
    ((12.0, -1.0), np.sqrt(5.0)),
])
def test_min_distance(pt, d):
    assert min_distance(pt, [[0, 0], [10, 0], [10, 10]]) == pytest.approx(d, abs=1e-12)


def test_severity_params():
    a, b = severity_params([0.0, 0.7], STORM)
    np.testing.assert_allclose(a, [0.1 / 0.3, 0.1])
    np.testing.assert_allclose(b, [0.5, 0.5])
    with pytest.raises(InputError):
        severity_params([-1.0])


def test_correlation_examples():
    regs = [RegionGeo("a", "a", 1, 0, 0), RegionGeo("b", "b", 1, 3, 4), RegionGeo("c", "c", 1, 0, 0)]
    cm = build_correlation(regs)
    assert cm.d_max == pytest.approx(5.0)
    assert cm.raw[0, 1] == pytest.approx(0.0)
    assert cm.raw[0, 2] == pytest.approx(1.0)
    assert cm.min_eigenvalue > 0
    np.testing.assert_allclose(np.diag(cm.matrix), 1.0)
    with pytest.raises(InputError):
        build_correlation(regs[:1])
    with pytest.raises(InputError):
        build_correlation([regs[0], regs[2]])


def test_repair_makes_pd():
    raw = np.array([[1, 0.9, -0.9], [0.9, 1, 0.9], [-0.9, 0.9, 1.0]])
    assert np.linalg.eigvalsh(raw).min() < 0
    C = repair_correlation(raw)
    assert np.linalg.eigvalsh(C).min() > 0
    np.testing.assert_allclose(np.diag(C), 1.0)
    np.testing.assert_allclose(C, C.T)
    np.linalg.cholesky(C)


def test_bisect_agrees_with_scipy():
    from scipy import special

    rng = np.random.default_rng(3)
    u = rng.uniform(size=200)
    a = rng.uniform(0.05, 3, 200)
    b = rng.uniform(0.2, 3, 200)
    np.testing.assert_allclose(beta_quantile_bisect(u, a, b), special.betaincinv(a, b, u), atol=1e-10)


def test_marginals_follow_beta():
    regs = [r for r in load_regions(fixture_path("regions_50.csv"))]
    xy = np.array([[r.cx, r.cy] for r in regs])
    d = min_distance(xy, STORM.path)
    near = [regs[i] for i in np.argsort(d)[:3]]
    corr = build_correlation(near)
    X = sample_losses(near, STORM, corr, 20_000, seed=7)
    for k, r in enumerate(near):
        a, b = severity_params(min_distance((r.cx, r.cy), STORM.path), STORM)
        res = stats.kstest(X[:, k] / r.wealth, stats.beta(float(a), float(b)).cdf)
        assert res.pvalue > 0.001


def test_identity_correlation_gives_independence():
    U = sample_uniforms(identity_correlation(3), 20_000, seed=2)
    c = np.corrcoef(U, rowvar=False)
    assert np.abs(c[np.triu_indices(3, 1)]).max() <= 0.02


def test_copula_tracks_target_correlation():
    regs = [RegionGeo("a", "a", 1, 0, 0), RegionGeo("b", "b", 1, 1, 0), RegionGeo("c", "c", 1, 4, 0)]
    cm = build_correlation(regs)
    U = sample_uniforms(cm, 50_000, seed=9)
    z = stats.norm.ppf(U)
    np.testing.assert_allclose(np.corrcoef(z, rowvar=False), cm.matrix, atol=0.02)


def test_thread_count_does_not_change_draws():
    regs = load_regions(fixture_path("regions_50.csv"))
    corr = build_correlation(regs)
    a = sample_losses(regs, STORM, corr, 9000, seed=11, threads=1)
    b = sample_losses(regs, STORM, corr, 9000, seed=11, threads=4)
    np.testing.assert_array_equal(a, b)
    c = sample_losses(regs, STORM, corr, 9000, seed=12)
    assert not np.array_equal(a, c)


def test_losses_bounded_by_wealth():
    regs = load_regions(fixture_path("regions_3.csv"))
    X = sample_losses(regs, STORM, build_correlation(regs), 5000, seed=1, quantile="bisect")
    w = np.array([r.wealth for r in regs])
    assert np.all(X >= 0) and np.all(X <= w)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.0, 5.0), st.floats(0.01, 5.0))
def test_mean_severity_decreases_with_distance(d, step):
    a1, b = severity_params([d], STORM)
    a2, _ = severity_params([d + step], STORM)
    # Beta mean a / (a + b)
    assert a2[0] / (a2[0] + b[0]) < a1[0] / (a1[0] + b[0])


def test_storm_validation():
    with pytest.raises(InputError):
        StormModel(path=[[0, 0]])
    with pytest.raises(InputError):
        StormModel(path=STORM_PATH, d_off=0)
    with pytest.raises(InputError):
        sample_losses(load_regions(fixture_path("regions_3.csv")), STORM, identity_correlation(2), 10, 1)


def test_212_grid_repair_is_small():
    cm = build_correlation(load_regions(fixture_path("regions_212.csv")))
    assert cm.repair_delta_rel < 0.05
    assert cm.min_eigenvalue > 0
