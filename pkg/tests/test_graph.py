import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from rcmlab.graph import (GraphError, GraphSample, added_vertex_split_counts, build_graph, coupled_boundary_graphs,
                          deletion_stability_statistic, is_subgraph, scaling_coupled_sweep, vertex_split_counts,
                          write_graph)
from rcmlab.model import ModelError, PointConfiguration, Window, make_model, sample_poisson
from rcmlab.rng import RngStream

GILBERT = make_model("gilbert", {"radius": 0.5}, 2)


def _config(points, side=10.0, mode="free"):
    # Gilbert marks are radii; 0.5 gives connection distance 1
    pts = np.asarray(points, float)
    return PointConfiguration.from_points(Window.box(side, 2, mode), pts, np.full(len(pts), 0.5))


def _graph_from_edges(n, edges, shell=None):
    # plain graph with given edges, roots from a naive labelling
    label = list(range(n))
    for a, b in edges:
        la, lb = label[a], label[b]
        label = [la if x == lb else x for x in label]
    cfg = _config(np.zeros((n, 2)) + 0.5)
    return GraphSample(cfg, np.asarray(edges, np.int64).reshape(-1, 2), np.asarray(label), shell)


def test_no_edges_when_phi_is_zero():
    m = make_model("constant", {"c": 0.0, "radius": 1.0}, 2)
    g = build_graph(_config(np.random.default_rng(0).random((30, 2))), m, key=1)
    assert g.n_edges == 0 and g.n_clusters == 30


def test_complete_graph_when_phi_is_one():
    m = make_model("constant", {"c": 1.0}, 2)
    g = build_graph(_config(np.random.default_rng(0).random((5, 2)) * 10), m, key=1)
    assert g.n_edges == 10 and g.n_clusters == 1
    assert np.all(g.cluster_size == 5)


def test_hard_radius_threshold():
    g = build_graph(_config([[1.0, 1.0], [1.9, 1.0], [3.0, 1.0]]), GILBERT, key=3)
    assert g.edge_id_pairs() == {(0, 1)}


def test_same_key_same_graph_and_different_key_varies():
    cfg = sample_poisson(Window.box(10.0, 2), 1.0, GILBERT.marks, 5)
    m = make_model("boolean", {"radius": 0.5, "c": 1.0}, 2)
    a = build_graph(cfg, m, key=11)
    b = build_graph(cfg, m, key=11)
    c = build_graph(cfg, m, key=12)
    assert a.edge_id_pairs() == b.edge_id_pairs()
    assert a.edge_id_pairs() != c.edge_id_pairs()


def test_edge_count_binomial():
    # phi = 0.3 on 12 points: each of the 66 pairs is an independent Bernoulli(0.3)
    m = make_model("constant", {"c": 0.3}, 2)
    cfg = _config(np.random.default_rng(1).random((12, 2)))
    counts = np.array([build_graph(cfg, m, key=k).n_edges for k in range(2000)])
    observed = np.bincount(counts, minlength=67)
    pmf = stats.binom.pmf(np.arange(67), 66, 0.3)
    lo, hi = 10, 30
    obs = np.concatenate([[observed[:lo].sum()], observed[lo:hi], [observed[hi:].sum()]])
    exp = 2000 * np.concatenate([[pmf[:lo].sum()], pmf[lo:hi], [pmf[hi:].sum()]])
    assert stats.chisquare(obs, exp).pvalue > 1e-3


def test_pair_marginals_uniform_across_pairs():
    m = make_model("constant", {"c": 0.5}, 2)
    cfg = _config(np.random.default_rng(2).random((6, 2)))
    hits = np.zeros((6, 6))
    for k in range(1500):
        g = build_graph(cfg, m, key=k)
        for a, b in g.edge_id_pairs():
            hits[a, b] += 1
    freq = hits[np.triu_indices(6, 1)] / 1500
    assert np.all(np.abs(freq - 0.5) < 4 * math.sqrt(0.25 / 1500))


def test_edge_count_mean_on_torus():
    # E edges = t^2 |W| d_phi / 2 = 200 pi on the 20 x 20 torus at t = 1
    w = Window.box(20.0, 2, "torus")
    counts = [build_graph(sample_poisson(w, 1.0, GILBERT.marks, RngStream(3, k).generator()), GILBERT,
                          RngStream(4, k).generator()).n_edges for k in range(150)]
    expect = 200 * math.pi
    assert abs(np.mean(counts) - expect) < 3 * np.std(counts, ddof=1) / math.sqrt(150)


def test_mecke_one_point_identity_for_isolated_vertices():
    # sum over points of 1{isolated} versus t |W| P(an added uniform point is isolated)
    w = Window.box(12.0, 2, "torus")
    t = 0.6
    lhs, rhs = [], []
    for k in range(150):
        gen = RngStream(13, k).generator()
        g = build_graph(sample_poisson(w, t, GILBERT.marks, gen), GILBERT, gen)
        lhs.append(float(np.sum(g.cluster_size == 1)))
        probes = [added_vertex_split_counts(g, GILBERT, gen.random(2) * 12.0, 0.5, gen)[0] == 0
                  for _ in range(20)]
        rhs.append(t * w.volume * float(np.mean(probes)))
    se = math.hypot(np.std(lhs, ddof=1), np.std(rhs, ddof=1)) / math.sqrt(150)
    assert abs(np.mean(lhs) - np.mean(rhs)) < 3 * se
    assert abs(np.mean(lhs) - t * w.volume * math.exp(-t * math.pi)) < 3 * np.std(lhs, ddof=1) / math.sqrt(150)


def test_clusters_match_bfs():
    w = Window.box(15.0, 2)
    for k in range(5):
        cfg = sample_poisson(w, 1.2, GILBERT.marks, k)
        g = build_graph(cfg, GILBERT, key=k)
        lab = g.bfs_labels()
        _, a = np.unique(g.roots, return_inverse=True)
        _, b = np.unique(lab, return_inverse=True)
        # same partition up to relabelling
        assert len(set(zip(a.tolist(), b.tolist()))) == len(set(a.tolist())) == len(set(b.tolist()))


def test_torus_too_small_rejected():
    cfg = _config([[0.1, 0.1]], side=1.5, mode="torus")
    with pytest.raises((ModelError, GraphError)):
        build_graph(cfg, GILBERT, key=1)


def test_split_counts_small_graphs():
    g = _graph_from_edges(3, [])
    assert vertex_split_counts(g, 0) == (0, 0, 0)
    path = _graph_from_edges(3, [(0, 1), (1, 2)])
    assert vertex_split_counts(path, 1) == (2, 2, 0)
    assert vertex_split_counts(path, 0) == (1, 1, 0)
    shell = np.array([True, False, True])
    path = _graph_from_edges(3, [(0, 1), (1, 2)], shell)
    assert vertex_split_counts(path, 1) == (2, 1, 2)
    # triangle with a pendant: only the attachment vertex separates
    tri = _graph_from_edges(4, [(0, 1), (1, 2), (0, 2), (2, 3)])
    assert vertex_split_counts(tri, 2) == (2, 2, 0)
    assert vertex_split_counts(tri, 0) == (1, 1, 0)


def _brute_split(n, edges, shell, v):
    adj = {k: set() for k in range(n)}
    for a, b in edges:
        adj[a].add(b)
        adj[b].add(a)
    seen, pieces, touching = {v}, 0, 0
    for start in adj[v]:
        if start in seen:
            continue
        pieces += 1
        stack, comp = [start], [start]
        seen.add(start)
        while stack:
            x = stack.pop()
            for y in adj[x]:
                if y not in seen:
                    seen.add(y)
                    stack.append(y)
                    comp.append(y)
        touching += any(shell[c] for c in comp)
    return pieces, touching


@settings(max_examples=80, deadline=None)
@given(st.integers(2, 12).flatmap(lambda n: st.tuples(
    st.just(n),
    st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=3 * n),
    st.lists(st.booleans(), min_size=n, max_size=n))))
def test_split_table_matches_brute_force(data):
    n, raw, shell = data
    edges = sorted({(min(a, b), max(a, b)) for a, b in raw if a != b})
    g = _graph_from_edges(n, edges, np.array(shell))
    for v in range(n):
        n0, nplus, ninf = vertex_split_counts(g, v)
        pieces, touching = _brute_split(n, edges, shell, v)
        assert (n0, ninf) == (pieces, touching)
        assert nplus == pieces - max(touching - 1, 0)


def test_added_vertex_split_counts():
    cfg = _config([[1.0, 1.0], [3.0, 1.0], [8.0, 8.0]])
    g = build_graph(cfg, GILBERT, key=1, shell_mask=np.array([True, True, False]))
    n0, nplus, ninf = added_vertex_split_counts(g, GILBERT, [2.0, 1.0], 0.5, 0)
    assert (n0, nplus, ninf) == (2, 1, 2)
    assert added_vertex_split_counts(g, GILBERT, [5.0, 5.0], 0.5, 0) == (0, 0, 0)


def test_boundary_coupling_sandwich_and_chain():
    w = Window.box(8.0, 2)
    for k in range(30):
        cg = coupled_boundary_graphs(w, 1.0, 0.6, 1.0, GILBERT, RngStream(9, k).generator())
        assert cg.stats.sandwich_holds()
        assert is_subgraph(cg.free, cg.mid) and is_subgraph(cg.mid, cg.wired)
        assert not np.any(cg.free.shell_mask)


def test_boundary_coupling_preconditions():
    w = Window.box(8.0, 2)
    with pytest.raises(GraphError):
        coupled_boundary_graphs(w, 0.5, 0.5, 1.0, GILBERT, 0)
    with pytest.raises(GraphError):
        coupled_boundary_graphs(w, 1.0, 1.5, 1.0, GILBERT, 0)


def test_deletion_statistic_on_path_between_shell_points():
    shell = np.array([True, False, False, True])
    g = _graph_from_edges(4, [(0, 1), (1, 2), (2, 3)], shell)
    assert deletion_stability_statistic(g) == (2, 1.0)


def test_scaling_sweep_nested_and_matches_direct_at_unit_scale():
    w = Window.box(12.0, 2, "torus")
    cfg = sample_poisson(w, 1.0, GILBERT.marks, 3)
    graphs = scaling_coupled_sweep(cfg, GILBERT, [0.5, 1.0, 1.5], key=7)
    for small, big in zip(graphs, graphs[1:]):
        assert small.edge_id_pairs() <= big.edge_id_pairs()
    assert graphs[1].edge_id_pairs() == build_graph(cfg, GILBERT, key=7).edge_id_pairs()


def test_scaling_sweep_boolean_nested():
    m = make_model("boolean", {"radius": 0.5, "c": 1.5}, 2)
    cfg = sample_poisson(Window.box(10.0, 2), 1.0, m.marks, 4)
    graphs = scaling_coupled_sweep(cfg, m, [0.5, 1.0, 2.0], key=8)
    assert graphs[0].edge_id_pairs() <= graphs[1].edge_id_pairs() <= graphs[2].edge_id_pairs()
    assert graphs[1].edge_id_pairs() == build_graph(cfg, m, key=8).edge_id_pairs()


def test_write_graph_roundtrip(tmp_path):
    cfg = _config([[1.0, 1.0], [1.5, 1.0], [5.0, 5.0]])
    g = build_graph(cfg, GILBERT, key=1)
    for compress in (False, True):
        e, v = write_graph(g, tmp_path / f"g{compress}", compress)
        assert e.exists() and v.exists()
    assert (tmp_path / "gFalse.edges").read_text() == "0 1\n"
    lines = (tmp_path / "gFalse.vertices").read_text().splitlines()
    assert len(lines) == 3 and lines[0].split()[-1] == lines[1].split()[-1]
