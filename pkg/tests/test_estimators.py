import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rcmlab.estimators import (INVERSE, ONE, Accumulator, EmpiricalWeightMeasure, Estimate, SweepResult,
                               WeightedSample, agree, cluster_representative_count, coupled_finite_difference,
                               estimate_theta, indicator, kappa_from_clusters, mean_size_identity, merge_estimates,
                               mr_derivative, nu_bound, nu_bound_check, payload_by_name, pmf_from_clusters,
                               reweight_estimate, reweighted_pmf)
from rcmlab.explorer import ExplorationLimits, sample_clusters
from rcmlab.graph import build_graph
from rcmlab.model import PointConfiguration, Window, make_model

GILBERT = make_model("gilbert", {"radius": 0.5}, 2)


@pytest.fixture(scope="module")
def clusters_half():
    return sample_clusters(0.5, GILBERT, 6000, 21, label="est-test")


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=2, max_size=40), st.randoms())
def test_accumulator_merge_is_order_independent(values, rnd):
    cut = sorted(rnd.sample(range(len(values) + 1), 2))
    parts = [values[:cut[0]], values[cut[0]:cut[1]], values[cut[1]:]]
    accs = [Accumulator.of(p) for p in parts]
    a = merge_estimates(accs)
    rnd.shuffle(accs)
    b = merge_estimates(accs)
    c = Accumulator.of(values).estimate()
    assert a == b == c
    assert a.value == pytest.approx(math.fsum(values) / len(values), rel=1e-12, abs=1e-9)


def test_accumulator_matches_numpy():
    x = np.random.default_rng(0).normal(3.0, 2.0, 1000)
    e = Estimate.from_samples(x)
    assert e.value == pytest.approx(x.mean(), rel=1e-14)
    assert e.stderr == pytest.approx(x.std(ddof=1) / math.sqrt(1000), rel=1e-12)
    assert Estimate.from_samples([1.0]).stderr == math.inf
    with pytest.raises(ValueError):
        Accumulator.of([1.0, math.nan])


def test_agree_uses_combined_stderr():
    a, b = Estimate(1.0, 0.3, 10), Estimate(2.1, 0.4, 10)
    assert not agree(a, b, k=2.0)
    assert agree(a, b, k=2.3)


def test_payloads():
    assert payload_by_name("inverse") is INVERSE
    assert payload_by_name("size==3")(np.array([2, 3])).tolist() == [0.0, 1.0]
    with pytest.raises(ValueError):
        payload_by_name("square")


def test_weight_is_one_at_sampling_intensity():
    s = WeightedSample(5, 7.3, 0.8)
    assert s.weight(0.8) == 1.0
    assert s.log_weight(0.4) == pytest.approx(4 * math.log(0.5) + 0.4 * 7.3)


def test_reweight_at_t0_reproduces_direct_mean(clusters_half):
    samples = [WeightedSample.from_cluster(c, 0.5) for c in clusters_half]
    rw = reweight_estimate(samples, 0.5, INVERSE)
    finite = [c for c in clusters_half if not c.truncated]
    direct = Accumulator.of([1.0 / c.size for c in finite], censored=len(clusters_half) - len(finite)).estimate()
    assert rw.estimate.value == direct.value
    assert rw.ess_fraction == pytest.approx(len(finite) / len(clusters_half))


def test_reweighted_isolation_matches_closed_form(clusters_half):
    samples = [WeightedSample.from_cluster(c, 0.5) for c in clusters_half]
    for t in (0.4, 0.6):
        pmf, ess = reweighted_pmf(samples, t, 3)
        expect = math.exp(-t * math.pi)
        assert abs(pmf[0].value - expect) < 3 * pmf[0].stderr
        assert ess > 0.5


def test_low_ess_warns(clusters_half):
    samples = [WeightedSample.from_cluster(c, 0.5) for c in clusters_half[:500]]
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        reweight_estimate(samples, 1.0, INVERSE)
    assert any("effective sample size" in str(w.message) for w in rec)


def test_mr_derivative_of_isolation_probability(clusters_half):
    # d/dt exp(-pi t) = -pi exp(-pi t)
    samples = [WeightedSample.from_cluster(c, 0.5) for c in clusters_half]
    est = mr_derivative(samples, 0.5, indicator(1))
    expect = -math.pi * math.exp(-0.5 * math.pi)
    assert abs(est.value - expect) < 3 * est.stderr
    with pytest.raises(ValueError):
        mr_derivative(samples, 0.5, ONE)
    assert mr_derivative(samples, 0.5, ONE, allow_nondecaying=True).n_samples > 0


def test_finite_difference_of_isolation_probability():
    est = coupled_finite_difference(0.5, 0.05, GILBERT, ExplorationLimits(), 6000, 3, indicator(1))
    expect = -math.pi * math.exp(-0.5 * math.pi)
    assert abs(est.value - expect) < 3 * est.stderr
    with pytest.raises(ValueError):
        coupled_finite_difference(0.5, 0.6, GILBERT, ExplorationLimits(), 10, 3)


def test_mean_size_identity_small_t(clusters_half):
    samples = [WeightedSample.from_cluster(c, 0.5) for c in clusters_half]
    res = mean_size_identity(samples, 0.5)
    assert abs(res["difference"].value) < 3 * res["difference"].stderr


def test_pmf_mass_sums_to_one(clusters_half):
    res = pmf_from_clusters(clusters_half, 8)
    assert sum(e.value for e in res.pmf) + res.censored.value == pytest.approx(1.0, abs=1e-12)


def test_theta_and_kappa_at_zero_intensity():
    est = estimate_theta(0.0, GILBERT, ExplorationLimits(), 100, 1)
    assert est.value == 0.0 and est.stderr == 0.0
    cl = sample_clusters(0.0, GILBERT, 10, 1, with_phi_lambda=False)
    assert kappa_from_clusters(cl, 0.0).value == 0.0


def test_nu_one_is_unit_point_mass_at_degree_integral():
    # clusters of size <= 2 are never truncated, so a small vertex cap is harmless here
    cl = sample_clusters(1.0, GILBERT, 8000, 5, limits=ExplorationLimits(max_vertices=20), label="nu-test")
    samples = [WeightedSample.from_cluster(c, 1.0) for c in cl]
    nu1 = EmpiricalWeightMeasure.from_samples(samples, 1)
    assert np.allclose(nu1.values, math.pi)
    assert nu1.mass(math.pi - 1e-9).value == 0.0
    total = nu1.mass(math.pi)
    assert abs(total.value - 1.0) < 3 * total.stderr


def test_nu_measure_independent_of_sampling_intensity():
    masses = []
    for t0 in (0.5, 1.0):
        cl = sample_clusters(t0, GILBERT, 6000, 6, limits=ExplorationLimits(max_vertices=20), label="nu-t0")
        m = EmpiricalWeightMeasure.from_samples([WeightedSample.from_cluster(c, t0) for c in cl], 2)
        masses.append(m.mass(5.0))
    assert agree(*masses)


def test_nu_bound_formula_and_check():
    assert float(nu_bound(2, 1.5)) == pytest.approx(math.e * 1.5)
    assert float(nu_bound(3, 2.0)) == pytest.approx(math.e ** 2)
    fake = [WeightedSample(2, 4.0, 1.0), WeightedSample(1, math.pi, 1.0)]
    rep = nu_bound_check(fake, 2, [1.0, 10.0])
    assert rep["rows"][0]["nu"] == 0.0
    with pytest.raises(ValueError):
        nu_bound_check(fake, 1, [1.0])


def test_second_differences_of_exact_quadratic():
    grid = np.array([0.2, 0.4, 0.5, 0.8, 1.0])
    a = -0.7
    tk = [Estimate(a * t * t, 0.01, 10) for t in grid]
    res = SweepResult(grid, tk, tk, tk, math.pi)
    assert np.allclose(res.second_differences, 2 * a + math.pi)
    assert res.convex_within()
    assert np.all(res.second_difference_stderr > 0)


def test_cluster_representative_count():
    w = Window.box(4.0, 2)
    pts = [[0.5, 0.5], [1.2, 0.5], [3.5, 3.5], [2.0, 3.9]]
    cfg = PointConfiguration.from_points(w, pts, np.full(4, 0.5))
    g = build_graph(cfg, GILBERT, key=1, shell_mask=np.array([False, False, False, True]))
    box = Window((0.0, 0.0), (2.0, 2.0))
    # cluster {0,1} has representative (0.5, 0.5) in the box; {2} lies outside; {3} touches the shell
    assert cluster_representative_count(g, box) == pytest.approx(1 / 4)
