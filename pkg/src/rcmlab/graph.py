"""Random connection graphs on finite configurations, boundary couplings and split statistics."""
from __future__ import annotations

import dataclasses
import gzip
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from pathlib import Path

import numpy as np

from .geometry import candidate_pairs
from .model import ConnectionModel, ModelError, PointConfiguration, Window, sample_poisson
from .rng import as_generator, draw_key, pair_uniforms
from .unionfind import UnionFind

DEFAULT_PAIR_CAP = 20_000_000
BOUNDARY_CONDITIONS = ("plain", "free", "wired")


class GraphError(ValueError):
    pass


class GraphSample:
    """One realisation of the connection graph on a finite configuration.

    Vertices are addressed by local index ``0..n-1``; ``config.ids`` maps them to
    point ids.  In wired mode every shell vertex shares one cluster (joined
    through a sentinel, not through materialised edges).
    """

    def __init__(self, config: PointConfiguration, edges: np.ndarray, roots: np.ndarray,
                 shell_mask: np.ndarray | None = None, boundary_condition: str = "plain",
                 key: int | None = None):
        if boundary_condition not in BOUNDARY_CONDITIONS:
            raise GraphError(f"unknown boundary condition {boundary_condition!r}")
        n = len(config)
        self.config = config
        self.edges = np.asarray(edges, np.int64).reshape(-1, 2)
        self.roots = np.asarray(roots, np.int64)
        self.shell_mask = np.zeros(n, bool) if shell_mask is None else np.asarray(shell_mask, bool)
        self.boundary_condition = boundary_condition
        self.key = key
        both = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
        other = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
        order = np.argsort(both, kind="stable")
        self.indices = other[order]
        self.indptr = np.concatenate([[0], np.cumsum(np.bincount(both, minlength=n))]).astype(np.int64)
        _, inv, counts = np.unique(self.roots, return_inverse=True, return_counts=True)
        self._cluster_label = inv.reshape(-1)
        self.cluster_size = counts[self._cluster_label] if n else np.zeros(0, np.int64)
        shell_per_cluster = np.bincount(self._cluster_label, weights=self.shell_mask, minlength=len(counts))
        self.touches_shell = shell_per_cluster[self._cluster_label] > 0 if n else np.zeros(0, bool)

    def __len__(self):
        return len(self.config)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_clusters(self) -> int:
        return int(len(np.unique(self.roots)))

    @cached_property
    def _index(self) -> dict:
        return {int(v): k for k, v in enumerate(self.config.ids)}

    def index_of(self, vertex_id: int) -> int:
        try:
            return self._index[int(vertex_id)]
        except KeyError:
            raise GraphError(f"unknown vertex id {vertex_id}") from None

    def neighbors(self, k: int) -> np.ndarray:
        return self.indices[self.indptr[k]:self.indptr[k + 1]]

    def neighbor_ids(self, vertex_id: int) -> np.ndarray:
        return self.config.ids[self.neighbors(self.index_of(vertex_id))]

    def edge_id_pairs(self) -> set:
        ids = self.config.ids
        a, b = ids[self.edges[:, 0]], ids[self.edges[:, 1]]
        return set(zip(np.minimum(a, b).tolist(), np.maximum(a, b).tolist()))

    def cluster_members(self, k: int) -> np.ndarray:
        return np.nonzero(self.roots == self.roots[k])[0]

    def bfs_labels(self) -> np.ndarray:
        """Component labels by breadth-first search over edges only (ignores wiring)."""
        n = len(self)
        label = np.full(n, -1, np.int64)
        indptr, indices = self.indptr.tolist(), self.indices.tolist()
        for s in range(n):
            if label[s] >= 0:
                continue
            label[s] = s
            queue = [s]
            while queue:
                v = queue.pop()
                for w in indices[indptr[v]:indptr[v + 1]]:
                    if label[w] < 0:
                        label[w] = s
                        queue.append(w)
        return label

    @cached_property
    def split_table(self) -> np.ndarray:
        """(n, 3) array of (N0, Nplus, Ninf) for every vertex, via one articulation-point pass."""
        n0, ninf = _split_counts(self.indptr, self.indices, self.shell_mask)
        nplus = n0 - np.maximum(ninf - 1, 0)
        return np.stack([n0, nplus, ninf], axis=1)


def _split_counts(indptr, indices, shell_mask):
    # Iterative DFS computing low-links and per-subtree shell counts.  Deleting v
    # separates each DFS child c with low[c] >= disc[v]; the rest of the cluster
    # (if v is not the DFS root) is one more component.
    n = len(shell_mask)
    ptr, idx = indptr.tolist(), indices.tolist()
    disc = [-1] * n
    low = [0] * n
    parent = [-1] * n
    sub = [int(b) for b in shell_mask]
    own = list(sub)
    n0 = [0] * n
    ninf = [0] * n
    sep_shell = [0] * n
    pos = ptr[:-1]
    pos = list(pos)
    timer = 0
    for s in range(n):
        if disc[s] >= 0:
            continue
        disc[s] = low[s] = timer
        timer += 1
        stack = [s]
        comp = [s]
        while stack:
            v = stack[-1]
            i = pos[v]
            if i < ptr[v + 1]:
                pos[v] = i + 1
                w = idx[i]
                if disc[w] < 0:
                    parent[w] = v
                    disc[w] = low[w] = timer
                    timer += 1
                    stack.append(w)
                    comp.append(w)
                elif w != parent[v] and disc[w] < low[v]:
                    low[v] = disc[w]
            else:
                stack.pop()
                p = parent[v]
                if p >= 0:
                    if low[v] < low[p]:
                        low[p] = low[v]
                    sub[p] += sub[v]
                    if low[v] >= disc[p]:
                        n0[p] += 1
                        sep_shell[p] += sub[v]
                        if sub[v] > 0:
                            ninf[p] += 1
        total = sub[s]
        for v in comp:
            if v != s:
                n0[v] += 1
                if total - own[v] - sep_shell[v] > 0:
                    ninf[v] += 1
    return np.asarray(n0, np.int64), np.asarray(ninf, np.int64)


def _pairs_for(config: PointConfiguration, radius: float, pair_cap: int):
    w = config.window
    n = len(config)
    if not math.isfinite(radius) and n * (n - 1) // 2 > pair_cap:
        raise GraphError(f"{n * (n - 1) // 2} candidate pairs exceed the pair cap {pair_cap}")
    if w.torus:
        return candidate_pairs(config.locations, radius, lower=w.lower, sides=w.sides, torus=True)
    return candidate_pairs(config.locations, radius)


def _check_model_window(model: ConnectionModel, window: Window):
    if model.dim != window.dim:
        raise ModelError(f"model dimension {model.dim} does not match window dimension {window.dim}")
    if window.torus:
        window.check_range(model.range_bound)


def build_graph(config: PointConfiguration, model: ConnectionModel, rng=None, *, key: int | None = None,
                shell_mask=None, boundary_condition: str = "plain",
                pair_cap: int = DEFAULT_PAIR_CAP) -> GraphSample:
    """Sample the connection graph on ``config``.

    Each candidate pair gets the uniform ``pair_uniforms(key, id_i, id_j)`` and is
    an edge iff that uniform is below phi.  Passing the same ``key`` to graphs on
    overlapping configurations therefore couples them pathwise.
    """
    _check_model_window(model, config.window)
    if key is None:
        key = draw_key(as_generator(rng))
    n = len(config)
    i, j, disp = _pairs_for(config, model.range_bound, pair_cap)
    if len(i):
        prob = model.phi(disp, config.marks[i], config.marks[j])
        on = pair_uniforms(key, config.ids[i], config.ids[j]) < prob
        i, j = i[on], j[on]
    return _assemble(config, i, j, shell_mask, boundary_condition, key)


def _assemble(config, i, j, shell_mask, boundary_condition, key):
    n = len(config)
    uf = UnionFind(n)
    uf.union_many(i.tolist(), j.tolist())
    shell = np.zeros(n, bool) if shell_mask is None else np.asarray(shell_mask, bool)
    if boundary_condition == "wired" and shell.any():
        sentinel = uf.add()
        for s in np.nonzero(shell)[0].tolist():
            uf.union(sentinel, s)
    roots = uf.roots()[:n]
    return GraphSample(config, np.stack([i, j], axis=1) if len(i) else np.zeros((0, 2), np.int64),
                       roots, shell, boundary_condition, key)


# ---------------------------------------------------------------------------
# boundary couplings


@dataclass
class BoundaryStats:
    m_free: int
    m_mid: Fraction
    m_wired: int
    n_inner: int
    n_ds: int
    inner_ids: np.ndarray
    splits: np.ndarray  # (n_inner, 3): N0, Nplus, Ninf in the middle graph

    @property
    def m_mid_value(self) -> float:
        return float(self.m_mid)

    @property
    def ds_rate(self) -> float:
        return self.n_ds / self.n_inner if self.n_inner else 0.0

    def sandwich_holds(self) -> bool:
        return self.m_wired <= self.m_mid <= self.m_free


class CoupledGraphs(tuple):
    __slots__ = ()

    def __new__(cls, free, mid, wired, stats):
        return super().__new__(cls, (free, mid, wired, stats))

    free = property(lambda self: self[0])
    mid = property(lambda self: self[1])
    wired = property(lambda self: self[2])
    stats = property(lambda self: self[3])


def coupled_boundary_graphs(window: Window, shell_width: float, t: float, t0: float,
                            model: ConnectionModel, rng, *, key: int | None = None) -> CoupledGraphs:
    """Free, middle and wired graphs on one thinned sample.

    An intensity-``t0`` configuration is drawn on the window grown by
    ``shell_width``; inner points are kept with probability ``t / t0`` and shell
    points are all kept.  All three graphs reuse one edge key.
    """
    R = model.range_bound
    if not math.isfinite(R):
        raise GraphError("boundary couplings need a finite range bound")
    if shell_width < R:
        raise GraphError(f"shell width {shell_width:g} is below the range bound {R:g}")
    if not 0 <= t <= t0:
        raise GraphError(f"need 0 <= t <= t0, got t={t}, t0={t0}")
    if window.torus:
        raise GraphError("boundary couplings are defined on free windows")
    gen = as_generator(rng)
    outer = window.expanded(shell_width)
    full = sample_poisson(outer, t0, model.marks, gen)
    inner = window.contains(full.locations)
    keep = gen.random(len(full)) * t0 < t
    if key is None:
        key = draw_key(gen)
    mid_cfg = full.subset(~inner | keep, intensity=t)
    shell = ~window.contains(mid_cfg.locations)
    free_cfg = dataclasses.replace(mid_cfg.subset(~shell), window=window)
    free = build_graph(free_cfg, model, key=key, boundary_condition="free")
    mid = build_graph(mid_cfg, model, key=key, shell_mask=shell, boundary_condition="plain")
    wired = build_graph(mid_cfg, model, key=key, shell_mask=shell, boundary_condition="wired")
    return CoupledGraphs(free, mid, wired, boundary_stats(free, mid, wired))


def boundary_stats(free: GraphSample, mid: GraphSample, wired: GraphSample) -> BoundaryStats:
    inner = ~mid.shell_mask
    m_mid = Fraction(0)
    _, first, counts = np.unique(mid.roots[inner], return_index=True, return_counts=True)
    sizes = mid.cluster_size[inner][first]
    for c, s in zip(counts.tolist(), sizes.tolist()):
        m_mid += Fraction(c, s)
    winner = ~wired.shell_mask & ~wired.touches_shell
    m_wired = int(len(np.unique(wired.roots[winner])))
    splits = mid.split_table[inner]
    return BoundaryStats(m_free=free.n_clusters, m_mid=m_mid, m_wired=m_wired, n_inner=int(inner.sum()),
                         n_ds=int(np.sum(splits[:, 2] >= 2)), inner_ids=mid.config.ids[inner], splits=splits)


def is_subgraph(small: GraphSample, big: GraphSample) -> bool:
    """Vertex ids and edges of ``small`` are contained in ``big``, and its clusters refine big's."""
    big_pos = {int(v): k for k, v in enumerate(big.config.ids)}
    try:
        pos = np.asarray([big_pos[int(v)] for v in small.config.ids], np.int64)
    except KeyError:
        return False
    if not small.edge_id_pairs() <= big.edge_id_pairs():
        return False
    # same small-cluster => same big-cluster
    first = {}
    for r_small, r_big in zip(small.roots.tolist(), big.roots[pos].tolist()):
        if first.setdefault(r_small, r_big) != r_big:
            return False
    return True


def vertex_split_counts(graph: GraphSample, vertex_id: int) -> tuple[int, int, int]:
    """(N0, Nplus, Ninf) for deleting the vertex: components left in its cluster,
    and how many of those reach the shell."""
    row = graph.split_table[graph.index_of(vertex_id)]
    return int(row[0]), int(row[1]), int(row[2])


def deletion_stability_statistic(graph: GraphSample) -> tuple[int, float]:
    """Count and rate of inner vertices whose removal leaves >= 2 shell-touching pieces."""
    inner = ~graph.shell_mask
    n_inner = int(inner.sum())
    count = int(np.sum(graph.split_table[inner, 2] >= 2))
    return count, (count / n_inner if n_inner else 0.0)


def added_vertex_split_counts(graph: GraphSample, model: ConnectionModel, location, mark,
                              rng) -> tuple[int, int, int]:
    """Insert a vertex with its own fresh edges and report (N0, Nplus, Ninf) for it.

    Removing the new vertex restores the original graph, so N0 is the number of
    distinct existing clusters it attaches to.
    """
    gen = as_generator(rng)
    cfg = graph.config
    if len(cfg) == 0:
        return 0, 0, 0
    disp = cfg.window.displacement(np.asarray(location, float)[None, :], cfg.locations)
    prob = model.phi(disp, np.full(len(cfg), mark, dtype=float), cfg.marks)
    hit = gen.random(len(cfg)) < prob
    roots = np.unique(graph.roots[hit])
    n0 = len(roots)
    if n0 == 0:
        return 0, 0, 0
    touching = graph.touches_shell[hit]
    ninf = len(np.unique(graph.roots[hit][touching]))
    return n0, n0 - max(ninf - 1, 0), ninf


# ---------------------------------------------------------------------------
# scaling coupling


@dataclass
class CouplingWeights:
    i: np.ndarray
    j: np.ndarray
    weight: np.ndarray  # distance over the inverse radial profile at the pair uniform


def coupling_weights(config: PointConfiguration, model: ConnectionModel, r_max: float, *,
                     key: int, pair_cap: int = DEFAULT_PAIR_CAP) -> CouplingWeights:
    if not model.is_radial_monotone:
        raise GraphError(f"model {model.tag} is not of radial monotone form")
    radius = model.range_bound * r_max
    if config.window.torus and np.any(config.window.sides < 2 * radius):
        raise GraphError("torus too small for the largest scale in the sweep")
    i, j, disp = _pairs_for(config, radius, pair_cap)
    z = pair_uniforms(key, config.ids[i], config.ids[j])
    inv = np.asarray(model.radial_inverse(z, config.marks[i], config.marks[j]), float)
    dist = np.sqrt(np.einsum("ij,ij->i", disp, disp))
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(inv > 0, dist / np.where(inv > 0, inv, 1.0), np.inf)
    return CouplingWeights(i, j, w)


def scaling_coupled_sweep(config: PointConfiguration, model: ConnectionModel, radii, rng=None, *,
                          key: int | None = None) -> list[GraphSample]:
    """Graphs for the length-rescaled connection function at each scale r.

    The pair weights are computed once; the graph at scale r keeps pairs with
    weight <= r, so the sweep is nested in r.
    """
    radii = [float(r) for r in radii]
    if any(not r > 0 for r in radii):
        raise GraphError("scales must be positive")
    if key is None:
        key = draw_key(as_generator(rng))
    cw = coupling_weights(config, model, max(radii), key=key)
    out = []
    for r in radii:
        on = cw.weight <= r
        out.append(_assemble(config, cw.i[on], cw.j[on], None, "plain", key))
    return out


# ---------------------------------------------------------------------------
# dump


def write_graph(graph: GraphSample, prefix: str | Path, compress: bool = False) -> tuple[Path, Path]:
    """Write ``<prefix>.edges`` ("id_i id_j") and ``<prefix>.vertices`` ("id x.. mark cluster_root")."""
    prefix = Path(prefix)
    suffix = ".gz" if compress else ""
    opener = gzip.open if compress else open
    ids = graph.config.ids
    edge_path = prefix.with_name(prefix.name + ".edges" + suffix)
    vert_path = prefix.with_name(prefix.name + ".vertices" + suffix)
    with opener(edge_path, "wt") as fh:
        for a, b in graph.edges.tolist():
            fh.write(f"{ids[a]} {ids[b]}\n")
    n = len(graph)
    root_id = np.where(graph.roots < n, ids[np.minimum(graph.roots, max(n - 1, 0))], -1)
    with opener(vert_path, "wt") as fh:
        for k in range(n):
            coords = " ".join(repr(float(v)) for v in graph.config.locations[k])
            fh.write(f"{ids[k]} {coords} {float(graph.config.marks[k])!r} {root_id[k]}\n")
    return edge_path, vert_path
