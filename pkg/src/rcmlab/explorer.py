"""Generation-by-generation sampling of the cluster of an added vertex at the origin."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import partial

import numpy as np
from scipy.spatial import cKDTree

from .geometry import candidate_pairs, cross_pairs, union_area_2d, union_length_1d
from .model import ConnectionModel, ModelError, PointConfiguration, Window, sample_poisson
from .parallel import run_replications
from .rng import as_generator


@dataclass(frozen=True)
class ExplorationLimits:
    max_generations: int = 10_000
    max_vertices: int = 5_000
    max_candidates: int = 1_000_000

    def __post_init__(self):
        if min(self.max_generations, self.max_vertices, self.max_candidates) <= 0:
            raise ValueError("exploration limits must be positive")


@dataclass
class ClusterSample:
    """Cluster of the root (index 0, at the origin).

    ``generation[k]`` is the graph distance of vertex k from the root; ``edges``
    is the full induced edge set, so the cluster can be thinned afterwards.
    When ``truncated`` is set the vertices of the last generation still have
    unexplored children and ``size`` is only a lower bound.
    """

    root_mark: float
    locations: np.ndarray
    marks: np.ndarray
    generation: np.ndarray
    edges: np.ndarray
    truncated: bool
    phi_lambda: float = math.nan
    phi_lambda_stderr: float = 0.0
    _open: np.ndarray | None = field(default=None, repr=False)

    @property
    def size(self) -> int:
        return len(self.marks)

    @property
    def n_generations(self) -> int:
        return int(self.generation.max()) if len(self.generation) else 0

    def generation_sizes(self) -> np.ndarray:
        return np.bincount(self.generation, minlength=self.n_generations + 1)

    @property
    def open_mask(self) -> np.ndarray:
        """Vertices whose children were never sampled (empty unless truncated)."""
        if self._open is not None:
            return self._open
        if not self.truncated:
            return np.zeros(self.size, bool)
        return self.generation == self.n_generations


def _group_starts(sorted_keys, n_groups):
    counts = np.bincount(sorted_keys, minlength=n_groups)
    return np.concatenate([[0], np.cumsum(counts)]), counts


def _log_complement(p):
    with np.errstate(divide="ignore"):
        return np.log1p(-p)


def frontier_acceptance(model: ConnectionModel, x, q, frontier_loc, frontier_marks, old_loc, old_marks):
    """Density of the next generation relative to t * Lebesgue x Q at candidate (x, q):
    no edge to the older vertices and at least one edge to the frontier."""
    x = np.atleast_2d(np.asarray(x, float))
    q = np.atleast_1d(np.asarray(q, float))
    log_f = np.zeros(len(x))
    log_o = np.zeros(len(x))
    R = model.range_bound
    k, l, disp = cross_pairs(x, np.asarray(frontier_loc, float).reshape(-1, x.shape[1]), R)
    if len(k):
        log_f = np.bincount(k, weights=_log_complement(model.phi(disp, q[k], np.asarray(frontier_marks)[l])),
                            minlength=len(x))
    if len(old_loc):
        k, l, disp = cross_pairs(x, np.asarray(old_loc, float).reshape(-1, x.shape[1]), R)
        if len(k):
            log_o = np.bincount(k, weights=_log_complement(model.phi(disp, q[k], np.asarray(old_marks)[l])),
                                minlength=len(x))
    return np.exp(log_o) * -np.expm1(log_f)


def _conditioned_edges(gen, groups, probs, n_groups):
    """Bernoulli(probs) edge indicators, conditioned on at least one success per group.

    ``groups`` is sorted.  The first success J has law
    P(J=j) = p_j prod_{i<j}(1-p_i) / (1 - prod_i(1-p_i)); later entries are free.
    """
    starts, counts = _group_starts(groups, n_groups)
    sure = probs >= 1.0
    logc = np.where(sure, 0.0, _log_complement(np.where(sure, 0.0, probs)))

    def seg_cumsum(v):
        cum = np.cumsum(v)
        return cum - np.repeat(np.concatenate([[0], cum])[starts[:-1]], counts)

    # log prod_{i<=j} (1 - p_i) inside each group
    within = np.where(seg_cumsum(sure.astype(np.int64)) > 0, -np.inf, seg_cumsum(logc))
    total = within[starts[1:] - 1]                      # whole-group survival
    hit_by = -np.expm1(within)                          # P(first success <= j)
    target = gen.random(n_groups) * -np.expm1(total)
    first_ok = hit_by > np.repeat(target, counts)
    pos = np.arange(len(probs)) - np.repeat(starts[:-1], counts)
    big = np.iinfo(np.int64).max
    first = np.minimum.reduceat(np.where(first_ok, pos, big), starts[:-1]) if len(probs) else np.zeros(0, np.int64)
    first_rep = np.repeat(np.minimum(first, counts - 1), counts)
    free = gen.random(len(probs)) < probs
    return np.where(pos < first_rep, False, np.where(pos == first_rep, True, free))


def explore_cluster(p: float, t: float, model: ConnectionModel, limits: ExplorationLimits | None = None,
                    rng=None, *, with_phi_lambda: bool = True) -> ClusterSample:
    """Sample the cluster of a vertex with mark ``p`` added at the origin, at intensity ``t``."""
    if limits is None:
        limits = ExplorationLimits()
    if t < 0:
        raise ModelError("intensity must be nonnegative")
    if not model.has_envelope:
        raise ModelError(f"model {model.tag} has no finite range or radial envelope")
    gen = as_generator(rng)
    d = model.dim
    R = model.range_bound
    mean_per_vertex = t * model.envelope_mass

    locs = [np.zeros((1, d))]
    marks = [np.array([float(p)])]
    gens = [np.zeros(1, np.int64)]
    edges = []
    n_total = 1
    n_old = 0  # vertices 0..n_old-1 belong to earlier generations
    frontier_loc, frontier_marks = locs[0], marks[0]
    truncated = False
    g = 0
    while True:
        if len(frontier_marks) == 0:
            break
        if g >= limits.max_generations or n_total >= limits.max_vertices:
            truncated = True
            break
        k = len(frontier_marks)
        n_cand = int(gen.poisson(mean_per_vertex * k)) if mean_per_vertex > 0 else 0
        if n_cand > limits.max_candidates:
            truncated = True
            break
        if n_cand == 0:
            frontier_loc = frontier_loc[:0]
            frontier_marks = frontier_marks[:0]
            continue
        owner = gen.integers(0, k, size=n_cand)
        x = frontier_loc[owner] + model.sample_envelope(gen, n_cand)
        q = model.marks.sample(gen, n_cand)

        # target density / dominating density at each candidate
        fk, fl, fdisp = cross_pairs(x, frontier_loc, R)
        phi_f = model.phi(fdisp, q[fk], frontier_marks[fl])
        env_sum = np.bincount(fk, weights=model.envelope(np.sqrt(np.einsum("ij,ij->i", fdisp, fdisp))),
                              minlength=n_cand)
        log_f = np.bincount(fk, weights=_log_complement(phi_f), minlength=n_cand)
        log_o = np.zeros(n_cand)
        if n_old:
            old_loc = np.concatenate(locs)[:n_old]
            old_marks = np.concatenate(marks)[:n_old]
            ok, ol, odisp = cross_pairs(x, old_loc, R)
            if len(ok):
                log_o = np.bincount(ok, weights=_log_complement(model.phi(odisp, q[ok], old_marks[ol])),
                                    minlength=n_cand)
        target = np.exp(log_o) * -np.expm1(log_f)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(env_sum > 0, target / env_sum, 0.0)
        if np.any(ratio > 1 + 1e-9):
            raise ModelError(f"envelope of {model.tag} does not dominate the connection function")
        accept = gen.random(n_cand) < ratio
        acc = np.nonzero(accept)[0]
        n_new = len(acc)
        if n_new == 0:
            frontier_loc = frontier_loc[:0]
            frontier_marks = frontier_marks[:0]
            continue

        # edges to the frontier, conditioned on at least one
        remap = np.full(n_cand, -1, np.int64)
        remap[acc] = np.arange(n_new)
        sel = accept[fk] & (phi_f > 0)
        gk, gl, gp = remap[fk[sel]], fl[sel], phi_f[sel]
        order = np.argsort(gk, kind="stable")
        gk, gl, gp = gk[order], gl[order], gp[order]
        on = _conditioned_edges(gen, gk, gp, n_new)
        frontier_start = n_total - k
        new_start = n_total
        edges.append(np.stack([frontier_start + gl[on], new_start + gk[on]], axis=1))

        # edges among the new vertices, unconditioned
        new_loc, new_marks = x[acc], q[acc]
        ii, jj, disp = candidate_pairs(new_loc, R)
        if len(ii):
            on = gen.random(len(ii)) < model.phi(disp, new_marks[ii], new_marks[jj])
            edges.append(np.stack([new_start + ii[on], new_start + jj[on]], axis=1))

        g += 1
        locs.append(new_loc)
        marks.append(new_marks)
        gens.append(np.full(n_new, g, np.int64))
        n_old = n_total
        n_total += n_new
        frontier_loc, frontier_marks = new_loc, new_marks

    cluster = ClusterSample(
        root_mark=float(p),
        locations=np.concatenate(locs),
        marks=np.concatenate(marks),
        generation=np.concatenate(gens),
        edges=np.concatenate(edges).astype(np.int64) if edges else np.zeros((0, 2), np.int64),
        truncated=truncated,
    )
    if with_phi_lambda and not truncated:
        cluster.phi_lambda, cluster.phi_lambda_stderr = phi_lambda_estimate(cluster.locations, cluster.marks,
                                                                            model, rng=gen)
    return cluster


def thin_cluster(cluster: ClusterSample, keep_prob: float, rng) -> ClusterSample:
    """Cluster of the root after independent ``keep_prob`` thinning of the non-root vertices.

    This is an exact sample of the cluster at intensity ``keep_prob * t``, coupled
    to the input.  The result is truncated only if it reaches an unexplored vertex.
    """
    gen = as_generator(rng)
    n = cluster.size
    keep = gen.random(n) < keep_prob
    keep[0] = True
    a, b = cluster.edges[:, 0], cluster.edges[:, 1]
    live = keep[a] & keep[b]
    a, b = a[live], b[live]
    adj_ptr = np.concatenate([[0], np.cumsum(np.bincount(np.concatenate([a, b]), minlength=n))])
    nbr = np.concatenate([b, a])[np.argsort(np.concatenate([a, b]), kind="stable")]
    dist = np.full(n, -1, np.int64)
    dist[0] = 0
    frontier = [0]
    ptr, nb = adj_ptr.tolist(), nbr.tolist()
    while frontier:
        nxt = []
        for v in frontier:
            for w in nb[ptr[v]:ptr[v + 1]]:
                if dist[w] < 0:
                    dist[w] = dist[v] + 1
                    nxt.append(w)
        frontier = nxt
    members = np.nonzero(dist >= 0)[0]
    remap = np.full(n, -1, np.int64)
    remap[members] = np.arange(len(members))
    inside = (remap[a] >= 0) & (remap[b] >= 0)
    open_mask = cluster.open_mask[members]
    return ClusterSample(cluster.root_mark, cluster.locations[members], cluster.marks[members], dist[members],
                         np.stack([remap[a[inside]], remap[b[inside]]], axis=1),
                         truncated=bool(open_mask.any()), _open=open_mask)


# ---------------------------------------------------------------------------
# phi_lambda


def phi_lambda_of_cluster(cluster, model: ConnectionModel, quadrature: dict | None = None, rng=None) -> float:
    """Integral over (x, q) of the probability that a point at x with mark q links to the cluster."""
    if isinstance(cluster, ClusterSample):
        loc, marks = cluster.locations, cluster.marks
    else:
        loc, marks = cluster
    return phi_lambda_estimate(loc, marks, model, quadrature, rng)[0]


def phi_lambda_estimate(locations, marks, model: ConnectionModel, quadrature: dict | None = None,
                        rng=None) -> tuple[float, float]:
    """``(value, stderr)``; stderr is zero for the deterministic methods.

    Balls of hard radius (Gilbert-type models) are measured exactly in d <= 2.
    Other finite-range models use a midpoint grid of spacing R/16 over the
    union of range balls; unbounded models use importance sampling from the
    envelope mixture.
    """
    quadrature = dict(quadrature or {})
    loc = np.asarray(locations, float).reshape(-1, model.dim)
    marks = np.asarray(marks, float)
    n = len(marks)
    if n == 0:
        return 0.0, 0.0
    if n == 1:
        return float(model.degree_integral(marks[0])), 0.0
    nodes, weights = model.marks.quadrature(quadrature.get("mark_order", 32))
    hard = model.hard_radius(marks[:, None], nodes[None, :])
    if hard is not None and model.dim <= 2:
        union = union_length_1d if model.dim == 1 else union_area_2d
        total = 0.0
        for col, w in enumerate(weights):
            total += w * union(loc, np.asarray(hard)[:, col])
        return float(total), 0.0
    R = model.range_bound
    if math.isfinite(R):
        return _phi_lambda_grid(loc, marks, model, nodes, weights, quadrature.get("spacing", R / 16)), 0.0
    return _phi_lambda_mc(loc, marks, model, as_generator(rng), quadrature.get("samples", 4096))


def _phi_lambda_grid(loc, marks, model, nodes, weights, h):
    d = model.dim
    R = model.range_bound
    lo = loc.min(axis=0) - R
    hi = loc.max(axis=0) + R
    axes = [lo[a] + h * (np.arange(int(math.ceil((hi[a] - lo[a]) / h))) + 0.5) for a in range(d)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    tree = cKDTree(loc)
    near = tree.query(grid, k=1, distance_upper_bound=R)[0]
    grid = grid[np.isfinite(near)]
    total = 0.0
    k, l, disp = cross_pairs(grid, loc, R)
    for q, w in zip(nodes, weights):
        logc = np.bincount(k, weights=_log_complement(model.phi(disp, np.full(len(k), q), marks[l])),
                           minlength=len(grid))
        total += w * float(np.sum(-np.expm1(logc)))
    return total * h**d


def _phi_lambda_mc(loc, marks, model, gen, n_samples):
    n = len(marks)
    owner = gen.integers(0, n, size=n_samples)
    x = loc[owner] + model.sample_envelope(gen, n_samples)
    q = model.marks.sample(gen, n_samples)
    k, l, disp = cross_pairs(x, loc, math.inf)
    r = np.sqrt(np.einsum("ij,ij->i", disp, disp))
    env = np.bincount(k, weights=model.envelope(r), minlength=n_samples)
    logc = np.bincount(k, weights=_log_complement(model.phi(disp, q[k], marks[l])), minlength=n_samples)
    # mixture density of x is env / (n * envelope_mass)
    vals = -np.expm1(logc) / env * n * model.envelope_mass
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n_samples))


# ---------------------------------------------------------------------------
# batches


def _explore_task(k, stream, t, model, limits, mark, with_phi_lambda):
    gen = stream.generator()
    p = model.marks.sample(gen, 1)[0] if mark is None else mark
    return explore_cluster(p, t, model, limits, gen, with_phi_lambda=with_phi_lambda)


def sample_clusters(t: float, model: ConnectionModel, reps: int, seed: int, *,
                    limits: ExplorationLimits | None = None, mark=None, with_phi_lambda: bool = True,
                    label: str = "explore", workers: int = 1) -> list[ClusterSample]:
    """Independent explorations; the root mark is drawn from Q unless ``mark`` is given."""
    task = partial(_explore_task, t=t, model=model, limits=limits or ExplorationLimits(), mark=mark,
                   with_phi_lambda=with_phi_lambda)
    return run_replications(task, reps, seed, f"{label}:{t!r}", workers)


def _window_root_task(k, stream, t, model, window, mark):
    from .graph import build_graph

    gen = stream.generator()
    p = model.marks.sample(gen, 1)[0] if mark is None else mark
    cfg = sample_poisson(window, t, model.marks, gen, id_offset=1)
    root = PointConfiguration.from_points(window, window.center[None, :], [p], ids=[0])
    graph = build_graph(root.join(cfg), model, gen)
    return int(graph.cluster_size[0])


def window_root_sizes(t: float, model: ConnectionModel, window: Window, reps: int, seed: int, *, mark=None,
                      label: str = "window-root", workers: int = 1) -> list[int]:
    """Cluster size of a vertex added at the window centre of a full window sample."""
    task = partial(_window_root_task, t=t, model=model, window=window, mark=mark)
    return run_replications(task, reps, seed, f"{label}:{t!r}", workers)


@dataclass
class ConsistencyReport:
    explorer_pmf: np.ndarray
    window_pmf: np.ndarray
    tv_distance: float
    pooled_noise: float
    z_scores: np.ndarray
    n_explorer: int
    n_window: int

    @property
    def passed(self) -> bool:
        return self.tv_distance < 3 * self.pooled_noise

    def to_dict(self) -> dict:
        return {"tv_distance": self.tv_distance, "pooled_noise": self.pooled_noise, "passed": self.passed,
                "explorer_pmf": self.explorer_pmf.tolist(), "window_pmf": self.window_pmf.tolist(),
                "z_scores": self.z_scores.tolist(), "n_explorer": self.n_explorer, "n_window": self.n_window}


def compare_size_pmfs(sizes_a, sizes_b, cap: int = 20) -> ConsistencyReport:
    """Total variation between the laws of min(|C|, cap), with per-bin z-scores.

    ``pooled_noise`` is half the sum over bins of the pooled binomial standard
    error of the bin difference, i.e. the scale of the TV distance under equality.
    """
    a = np.minimum(np.asarray(sizes_a), cap)
    b = np.minimum(np.asarray(sizes_b), cap)
    na, nb = len(a), len(b)
    pa = np.bincount(a, minlength=cap + 1)[1:] / na
    pb = np.bincount(b, minlength=cap + 1)[1:] / nb
    pooled = (pa * na + pb * nb) / (na + nb)
    se = np.sqrt(pooled * (1 - pooled) * (1 / na + 1 / nb))
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, (pa - pb) / se, 0.0)
    return ConsistencyReport(pa, pb, 0.5 * float(np.abs(pa - pb).sum()), 0.5 * float(se.sum()), z, na, nb)


def explorer_vs_window_consistency(model: ConnectionModel, t: float, window: Window, limits: ExplorationLimits,
                                   reps: int, seed: int, *, cap: int = 20, mark=None,
                                   workers: int = 1) -> ConsistencyReport:
    R = model.range_bound
    if not math.isfinite(R):
        raise ModelError("explorer/window comparison needs a finite range bound")
    if np.any(window.sides < 2 * limits.max_generations * R):
        raise ModelError(f"window sides must be at least 2 * max_generations * R = {2 * limits.max_generations * R:g}")
    clusters = sample_clusters(t, model, reps, seed, limits=limits, mark=mark, with_phi_lambda=False,
                               label="consistency-explorer", workers=workers)
    sizes_e = [c.size for c in clusters]
    sizes_w = window_root_sizes(t, model, window, reps, seed, mark=mark, label="consistency-window",
                                workers=workers)
    return compare_size_pmfs(sizes_e, sizes_w, cap)
