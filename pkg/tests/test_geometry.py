import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import integrate

from rcmlab.geometry import (ball_volume, candidate_pairs, cross_pairs, lens_volume, union_area_2d,
                             union_length_1d, unit_ball_volume)
from rcmlab.unionfind import UnionFind


def test_unit_ball_volumes():
    assert unit_ball_volume(1) == pytest.approx(2.0)
    assert unit_ball_volume(2) == pytest.approx(math.pi)
    assert unit_ball_volume(3) == pytest.approx(4 * math.pi / 3)
    assert ball_volume(2.0, 2) == pytest.approx(4 * math.pi)


def _lens_oracle_2d(r, a, b):
    # area of {x: |x| <= a, |x - (r, 0)| <= b} by integrating chord lengths over the first coordinate
    def chord(x):
        ha = math.sqrt(max(a * a - x * x, 0.0))
        hb = math.sqrt(max(b * b - (x - r) ** 2, 0.0))
        return 2 * min(ha, hb)

    lo, hi = max(-a, r - b), min(a, r + b)
    if hi <= lo:
        return 0.0
    val, _ = integrate.quad(chord, lo, hi, points=[(r * r + a * a - b * b) / (2 * r)] if r > 0 else None,
                            limit=200, epsabs=1e-12)
    return val


@pytest.mark.parametrize("r,a,b", [(0.0, 0.5, 0.5), (0.3, 0.5, 0.5), (0.9, 0.5, 0.5), (1.2, 0.5, 0.5),
                                   (0.2, 0.7, 0.3), (0.5, 0.7, 0.3), (0.95, 0.7, 0.3)])
def test_lens_area_matches_chord_integral(r, a, b):
    assert float(lens_volume(r, a, b, 2)) == pytest.approx(_lens_oracle_2d(r, a, b), abs=1e-9)


def test_lens_length_1d():
    assert float(lens_volume(0.4, 0.5, 0.5, 1)) == pytest.approx(0.6)
    assert float(lens_volume(2.0, 0.5, 0.5, 1)) == 0.0


def test_union_length_1d_examples():
    assert union_length_1d([0.0, 0.5, 5.0], 0.5) == pytest.approx(2.5)
    assert union_length_1d([0.0], 0.0) == 0.0


def _grid_area(c, r, h=2e-3):
    lo = (c - r[:, None]).min(axis=0)
    hi = (c + r[:, None]).max(axis=0)
    xs = np.arange(lo[0] + h / 2, hi[0], h)
    ys = np.arange(lo[1] + h / 2, hi[1], h)
    X, Y = np.meshgrid(xs, ys)
    cov = np.zeros(X.shape, bool)
    for (cx, cy), rr in zip(c, r):
        cov |= (X - cx) ** 2 + (Y - cy) ** 2 <= rr * rr
    return cov.sum() * h * h


def test_union_area_two_discs_closed_form():
    # two unit discs at distance 1: 2 pi - lens
    lens = 2 * math.acos(0.5) - 0.5 * math.sqrt(3)
    assert union_area_2d([[0, 0], [1, 0]], [1.0, 1.0]) == pytest.approx(2 * math.pi - lens, rel=1e-12)
    assert union_area_2d([[0, 0], [0.1, 0]], [1.0, 0.3]) == pytest.approx(math.pi, rel=1e-12)
    assert union_area_2d([[0, 0], [0, 0]], [0.5, 0.5]) == pytest.approx(math.pi / 4, rel=1e-12)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_union_area_random_discs_against_grid(seed):
    gen = np.random.default_rng(seed)
    c = gen.random((8, 2)) * 2
    r = 0.2 + 0.5 * gen.random(8)
    assert union_area_2d(c, r) == pytest.approx(_grid_area(c, r), rel=5e-3)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (6, 2), elements=st.floats(0, 3)), st.floats(0.05, 1.0))
def test_union_area_bounds(c, r):
    area = union_area_2d(c, np.full(6, r))
    assert math.pi * r * r * (1 - 1e-9) <= area <= 6 * math.pi * r * r * (1 + 1e-9)


def _brute(points, radius, sides=None):
    out = set()
    for a in range(len(points)):
        for b in range(a + 1, len(points)):
            d = points[b] - points[a]
            if sides is not None:
                d = d - sides * np.round(d / sides)
            if d @ d <= radius * radius:
                out.add((a, b))
    return out


@pytest.mark.parametrize("torus", [False, True])
def test_candidate_pairs_match_brute_force(torus):
    gen = np.random.default_rng(4)
    pts = gen.random((400, 2)) * 10
    sides = np.array([10.0, 10.0])
    i, j, disp = candidate_pairs(pts, 0.7, lower=np.zeros(2), sides=sides, torus=torus)
    assert set(zip(i.tolist(), j.tolist())) == _brute(pts, 0.7, sides if torus else None)
    assert np.all(np.linalg.norm(disp, axis=1) <= 0.7 + 1e-12)


@pytest.mark.parametrize("n_b", [50, 500])
def test_cross_pairs_match_brute_force(n_b):
    gen = np.random.default_rng(5)
    a = gen.random((120, 2)) * 5
    b = gen.random((n_b, 2)) * 5
    k, l, disp = cross_pairs(a, b, 0.6)
    expect = {(x, y) for x in range(len(a)) for y in range(len(b)) if np.sum((b[y] - a[x]) ** 2) <= 0.36}
    assert set(zip(k.tolist(), l.tolist())) == expect
    assert np.allclose(disp, b[l] - a[k])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 19), st.integers(0, 19)), max_size=40))
def test_union_find_matches_naive_components(pairs):
    uf = UnionFind(20)
    label = list(range(20))
    for a, b in pairs:
        uf.union(a, b)
        la, lb = label[a], label[b]
        label = [la if x == lb else x for x in label]
    for a in range(20):
        for b in range(20):
            assert (uf.find(a) == uf.find(b)) == (label[a] == label[b])
