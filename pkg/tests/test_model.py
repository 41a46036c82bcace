import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from rcmlab.model import (MarkDistribution, ModelError, PointConfiguration, Window, degree_integral, make_model,
                          sample_poisson, thin)
from rcmlab.rng import RngStream


def _radial_integral_2d(fn):
    # independent oracle: integrate a radial profile in polar coordinates
    val, _ = integrate.quad(lambda r: fn(r) * 2 * math.pi * r, 0, np.inf, limit=400)
    return val


def test_gilbert_degree_integral_closed_forms():
    assert make_model("gilbert", {"radius": 0.5}, 2).d_phi == pytest.approx(math.pi, rel=1e-12)
    assert make_model("gilbert", {"radius": 0.5}, 1).d_phi == pytest.approx(2.0, rel=1e-12)
    assert make_model("gilbert", {"radius": 0.5}, 3).d_phi == pytest.approx(4 * math.pi / 3, rel=1e-12)


def test_boolean_pair_integral_matches_polar_quadrature():
    m = make_model("boolean", {"radius": 0.5, "c": 2.0}, 2)
    from rcmlab.geometry import lens_volume

    for p, q in [(0.5, 0.5), (0.2, 0.7), (0.05, 0.9)]:
        oracle = _radial_integral_2d(lambda r: -math.expm1(-2.0 * float(lens_volume(r, p, q, 2))))
        assert float(m.pair_integral(p, q)) == pytest.approx(oracle, rel=1e-7)


def test_weighted_exp_pair_integral_matches_quadrature():
    m = make_model("weighted", {"beta": 2.0, "gamma": 0.5, "floor": 0.1}, 2)
    for p, q in [(0.0, 0.0), (0.3, 0.8), (1.0, 1.0)]:
        g = float(m.g(p, q))
        oracle = _radial_integral_2d(lambda r: math.exp(-g * r * r))
        assert float(m.pair_integral(p, q)) == pytest.approx(oracle, rel=1e-8)


def test_constant_model_zero_and_ball():
    zero = make_model("constant", {"c": 0.0, "radius": 1.0}, 2)
    assert zero.d_phi == 0.0
    half = make_model("constant", {"c": 0.5, "radius": 1.0}, 2)
    assert half.d_phi == pytest.approx(0.5 * math.pi)


def test_unknown_model_and_parameters_rejected():
    with pytest.raises(ModelError):
        make_model("nope", {}, 2)
    with pytest.raises(ModelError):
        make_model("gilbert", {"radius": 0.5, "colour": 1}, 2)


@settings(max_examples=60, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0, 1), st.floats(0, 1),
       st.sampled_from(["gilbert", "boolean", "weighted", "factorized"]))
def test_phi_symmetric_and_in_unit_interval(x, y, p, q, name):
    params = {"marks": {"kind": "uniform", "low": 0.05, "high": 1.0}} if name in ("gilbert", "boolean") else {}
    if name == "factorized":
        params = {"kernel": [[1.0, 0.5], [0.5, 0.2]], "psi": "gauss"}
        p, q = float(round(p)), float(round(q))
    m = make_model(name, params, 2)
    d = np.array([[x, y]])
    a = m.phi(d, np.array([p]), np.array([q]))
    b = m.phi(-d, np.array([q]), np.array([p]))
    assert a[0] == pytest.approx(b[0], abs=1e-15)
    assert 0.0 <= a[0] <= 1.0


def test_envelope_dominates_phi():
    gen = np.random.default_rng(3)
    for name, params in [("boolean", {"marks": {"kind": "uniform", "low": 0.1, "high": 0.6}}),
                         ("weighted", {}), ("factorized", {"kernel": [[1.0, 0.3], [0.3, 0.7]], "psi": "gauss"})]:
        m = make_model(name, params, 2)
        disp = gen.normal(size=(2000, 2)) * 0.8
        p = m.marks.sample(gen, 2000)
        q = m.marks.sample(gen, 2000)
        assert np.all(m.phi(disp, p, q) <= m.envelope(np.linalg.norm(disp, axis=1)) + 1e-12)


def test_mark_quadrature_integrates_mean():
    u = MarkDistribution.uniform(0.0, 2.0)
    nodes, w = u.quadrature()
    assert w.sum() == pytest.approx(1.0)
    assert w @ nodes == pytest.approx(1.0, rel=1e-12)
    disc = MarkDistribution.discrete([1.0, 3.0], [0.25, 0.75])
    nodes, w = disc.quadrature()
    assert w @ nodes == pytest.approx(2.5)


def test_window_minimum_image_displacement():
    w = Window.box(10.0, 2, "torus")
    d = w.displacement(np.array([[0.5, 9.5]]), np.array([[9.5, 0.5]]))
    assert np.allclose(np.abs(d), [[1.0, 1.0]])
    with pytest.raises(ModelError):
        Window((0, 0), (1, -1))


def test_poisson_count_law():
    w = Window.box(5.0, 2)
    counts = [len(sample_poisson(w, 0.8, MarkDistribution.point_mass(0.5), RngStream(1, k).generator()))
              for k in range(400)]
    assert abs(np.mean(counts) - 20.0) < 3 * math.sqrt(20.0 / 400)
    cfg = sample_poisson(w, 0.8, MarkDistribution.point_mass(0.5), 7)
    assert np.all((cfg.locations >= 0) & (cfg.locations <= 5))


def test_poisson_zero_intensity_and_cap():
    w = Window.box(5.0, 2)
    assert len(sample_poisson(w, 0.0, MarkDistribution.point_mass(0.5), 1)) == 0
    with pytest.raises(ModelError):
        sample_poisson(w, -1.0, MarkDistribution.point_mass(0.5), 1)
    with pytest.raises(ModelError):
        sample_poisson(w, 1e9, MarkDistribution.point_mass(0.5), 1)


def test_sampling_deterministic_per_stream():
    w = Window.box(5.0, 2)
    m = MarkDistribution.uniform(0.0, 1.0)
    a = sample_poisson(w, 1.0, m, RngStream(5, 2).generator())
    b = sample_poisson(w, 1.0, m, RngStream(5, 2).generator())
    assert np.array_equal(a.locations, b.locations) and np.array_equal(a.marks, b.marks)


def test_thinning_partitions_and_rescales():
    w = Window.box(10.0, 2)
    cfg = sample_poisson(w, 2.0, MarkDistribution.point_mass(0.5), 11)
    kept, removed = thin(cfg, 0.3, 12)
    assert len(kept) + len(removed) == len(cfg)
    assert set(kept.ids) | set(removed.ids) == set(cfg.ids)
    assert kept.intensity == pytest.approx(0.6)
    # binomial law of the kept count, pooled over streams
    fracs = [len(thin(cfg, 0.3, k)[0]) for k in range(200)]
    n = len(cfg)
    assert abs(np.mean(fracs) - 0.3 * n) < 4 * math.sqrt(0.21 * n / 200)


def test_continuous_marks_truncated_law():
    m = MarkDistribution.continuous("expon", (0.0, 1.0), 0.0, 2.0)
    x = m.sample(np.random.default_rng(0), 20000)
    assert x.min() >= 0 and x.max() <= 2.0
    ref = stats.truncexpon(b=2.0)
    assert stats.kstest(x, ref.cdf).pvalue > 1e-3


def test_degree_integral_vectorised():
    m = make_model("gilbert", {"marks": {"kind": "discrete", "values": [0.25, 0.5], "weights": [0.5, 0.5]}}, 2)
    vals = degree_integral(m, np.array([0.25, 0.5]))
    expect = [0.5 * math.pi * (0.5 ** 2 + 0.75 ** 2), 0.5 * math.pi * (0.75 ** 2 + 1.0)]
    assert np.allclose(vals, expect)


def test_point_configuration_rejects_duplicate_ids():
    with pytest.raises(ModelError):
        PointConfiguration.from_points(Window.box(1.0, 2), [[0.1, 0.1], [0.2, 0.2]], ids=[1, 1])
