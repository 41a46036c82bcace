"""Monte Carlo estimators built on explorations and window graphs."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Sequence

import numpy as np

from .explorer import ClusterSample, ExplorationLimits, sample_clusters, thin_cluster
from .graph import GraphSample, added_vertex_split_counts, build_graph, coupled_boundary_graphs
from .model import ConnectionModel, PointConfiguration, Window, sample_poisson
from .parallel import run_replications, stream_for
from .rng import draw_key

_SCALE = 1 << 1074  # every finite double is an integer multiple of 2**-1074


def _fixed(x: float) -> int:
    num, den = float(x).as_integer_ratio()
    return num * (_SCALE // den)


@dataclass(frozen=True)
class Accumulator:
    """Exact running sums; merging is associative and commutative bit for bit."""

    total: int = 0
    total_sq: int = 0
    n: int = 0
    censored: int = 0

    @classmethod
    def of(cls, values, censored: int = 0) -> "Accumulator":
        vals = np.asarray(values, float).ravel()
        if not np.all(np.isfinite(vals)):
            raise ValueError("samples must be finite")
        return cls(sum(map(_fixed, vals.tolist())), sum(map(_fixed, (vals * vals).tolist())), len(vals),
                   int(censored))

    def merge(self, other: "Accumulator") -> "Accumulator":
        return Accumulator(self.total + other.total, self.total_sq + other.total_sq, self.n + other.n,
                           self.censored + other.censored)

    def estimate(self) -> "Estimate":
        if self.n == 0:
            return Estimate(math.nan, math.inf, 0, 0.0)
        mean = self.total / (self.n * _SCALE)
        if self.n < 2:
            se = math.inf
        else:
            # n * sum x^2 - (sum x)^2 is exact in integers; only the final division rounds
            num = self.n * self.total_sq * _SCALE - self.total * self.total
            var = max(num, 0) / (self.n * (self.n - 1) * _SCALE * _SCALE)
            se = math.sqrt(var / self.n)
        return Estimate(mean, se, self.n, self.censored / self.n)


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float
    n_samples: int
    censored_mass: float = 0.0

    @classmethod
    def from_samples(cls, values, censored: int = 0) -> "Estimate":
        return Accumulator.of(values, censored).estimate()

    def to_dict(self) -> dict:
        return {"value": self.value, "stderr": self.stderr, "n": self.n_samples, "censored": self.censored_mass}


def merge_estimates(parts: Sequence[Accumulator]) -> Estimate:
    acc = Accumulator()
    for p in parts:
        acc = acc.merge(p)
    return acc.estimate()


def combined_stderr(*estimates: Estimate) -> float:
    return math.sqrt(sum(e.stderr**2 for e in estimates))


def agree(a: Estimate, b: Estimate, k: float = 3.0) -> bool:
    return abs(a.value - b.value) <= k * combined_stderr(a, b)


# ---------------------------------------------------------------------------
# payloads


@dataclass(frozen=True)
class Payload:
    """A function of the cluster size; ``decays`` records f(n) sqrt(n log n) -> 0."""

    name: str
    func: Callable
    decays: bool

    def __call__(self, sizes):
        return np.asarray(self.func(np.asarray(sizes, float)), float)


def _one(n):
    return np.ones_like(n)


def _inverse(n):
    return 1.0 / n


def _indicator(n, k):
    return (n == k).astype(float)


ONE = Payload("one", _one, False)
INVERSE = Payload("inverse", _inverse, True)


def indicator(k: int) -> Payload:
    return Payload(f"size=={k}", partial(_indicator, k=k), True)


def payload_by_name(name: str) -> Payload:
    if name == "one":
        return ONE
    if name == "inverse":
        return INVERSE
    if name.startswith("size=="):
        return indicator(int(name[6:]))
    raise ValueError(f"unknown payload {name!r}")


# ---------------------------------------------------------------------------
# weighted samples and the intensity change of measure


@dataclass(frozen=True)
class WeightedSample:
    size: int
    phi_lambda: float
    t0: float
    truncated: bool = False

    @classmethod
    def from_cluster(cls, c: ClusterSample, t0: float) -> "WeightedSample":
        return cls(c.size, c.phi_lambda, t0, c.truncated)

    def log_weight(self, t: float) -> float:
        return (self.size - 1) * math.log(t / self.t0) + (self.t0 - t) * self.phi_lambda

    def weight(self, t: float) -> float:
        return math.exp(self.log_weight(t))

    def m_stat(self, t: float) -> float:
        """|C| - 1 - t phi_lambda(C)."""
        return self.size - 1 - t * self.phi_lambda


@dataclass(frozen=True)
class ReweightResult:
    estimate: Estimate
    ess_fraction: float


def _weights(samples: Sequence[WeightedSample], t: float):
    if t <= 0:
        raise ValueError("target intensity must be positive")
    finite = np.array([not s.truncated for s in samples])
    sizes = np.array([s.size for s in samples], float)
    logw = np.array([s.log_weight(t) if not s.truncated else -np.inf for s in samples])
    w = np.where(finite, np.exp(logw), 0.0)
    return sizes, w, finite


def reweight_estimate(samples: Sequence[WeightedSample], t: float, payload: Payload | Callable) -> ReweightResult:
    """Estimate E_t[f(|C|) 1{|C| < inf}] from explorations made at ``samples[i].t0``."""
    sizes, w, finite = _weights(samples, t)
    vals = w * np.where(finite, np.asarray(payload(sizes), float), 0.0)
    est = Accumulator.of(vals, censored=int((~finite).sum())).estimate()
    wf = w[finite]
    ess = float(wf.sum() ** 2 / (wf * wf).sum()) / len(samples) if wf.size else 0.0
    if ess < 0.1:
        warnings.warn(f"effective sample size {ess:.1%} of n is below 10%; reweighting to t={t} is unreliable",
                      RuntimeWarning, stacklevel=2)
    return ReweightResult(est, ess)


def mr_derivative(samples: Sequence[WeightedSample], t: float, payload: Payload,
                  allow_nondecaying: bool = False) -> Estimate:
    """t^{-1} mean(M_t f(|C|)), an estimate of d/dt E_t f(|C|) (finite samples only)."""
    if isinstance(payload, Payload) and not payload.decays and not allow_nondecaying:
        raise ValueError(f"payload {payload.name} does not satisfy the growth condition")
    finite = [s for s in samples if not s.truncated]
    sizes = np.array([s.size for s in finite], float)
    m = np.array([s.m_stat(t) for s in finite])
    return Accumulator.of(m * payload(sizes) / t, censored=len(samples) - len(finite)).estimate()


def mean_size_identity(samples: Sequence[WeightedSample], t: float) -> dict:
    """Both sides of E(|C| - 1) = t E phi_lambda(C) and their paired difference."""
    finite = [s for s in samples if not s.truncated]
    lhs = np.array([s.size - 1 for s in finite], float)
    rhs = t * np.array([s.phi_lambda for s in finite])
    return {"size_minus_one": Estimate.from_samples(lhs), "t_phi_lambda": Estimate.from_samples(rhs),
            "difference": Estimate.from_samples(lhs - rhs), "censored": len(samples) - len(finite)}


# ---------------------------------------------------------------------------
# explorer-based estimators


def estimate_theta(t: float, model: ConnectionModel, limits: ExplorationLimits, reps: int, seed: int,
                   workers: int = 1) -> Estimate:
    """Fraction of explorations reaching ``limits.max_vertices`` (an upper proxy for theta)."""
    if t == 0 or reps == 0:
        return Estimate(0.0, 0.0, reps, 0.0)
    clusters = sample_clusters(t, model, reps, seed, limits=limits, with_phi_lambda=False, label="theta",
                               workers=workers)
    hit = np.array([c.truncated or c.size >= limits.max_vertices for c in clusters], float)
    return Accumulator.of(hit, censored=int(sum(c.truncated for c in clusters))).estimate()


@dataclass
class PmfResult:
    pmf: list[Estimate]
    censored: Estimate

    def values(self) -> np.ndarray:
        return np.array([e.value for e in self.pmf])

    def stderrs(self) -> np.ndarray:
        return np.array([e.stderr for e in self.pmf])


def pmf_from_clusters(clusters: Sequence[ClusterSample], n_max: int) -> PmfResult:
    sizes = np.array([c.size for c in clusters])
    trunc = np.array([c.truncated for c in clusters])
    pmf = [Estimate.from_samples(((sizes == n) & ~trunc).astype(float)) for n in range(1, n_max + 1)]
    cens = Estimate.from_samples(((sizes > n_max) | trunc).astype(float), censored=int(trunc.sum()))
    return PmfResult(pmf, cens)


def cluster_size_pmf(t: float, model: ConnectionModel, limits: ExplorationLimits, reps: int, n_max: int,
                     seed: int, workers: int = 1) -> PmfResult:
    clusters = sample_clusters(t, model, reps, seed, limits=limits, with_phi_lambda=False, label="pmf",
                               workers=workers)
    return pmf_from_clusters(clusters, n_max)


def reweighted_pmf(samples: Sequence[WeightedSample], t: float, n_max: int) -> tuple[list[Estimate], float]:
    out = [reweight_estimate(samples, t, indicator(n)) for n in range(1, n_max + 1)]
    return [r.estimate for r in out], out[0].ess_fraction


def kappa_from_clusters(clusters: Sequence[ClusterSample], t: float) -> Estimate:
    """t E[1/|C|]; truncated clusters contribute 1/size, which bounds their true value from above."""
    sizes = np.array([c.size for c in clusters], float)
    return Accumulator.of(t / sizes, censored=int(sum(c.truncated for c in clusters))).estimate()


def _fd_task(k, stream, t_hi, t_lo, model, limits, payload, mark):
    from .explorer import explore_cluster

    gen = stream.generator()
    p = model.marks.sample(gen, 1)[0] if mark is None else mark
    hi = explore_cluster(p, t_hi, model, limits, gen, with_phi_lambda=False)
    lo = thin_cluster(hi, t_lo / t_hi, gen)
    f = payload(np.array([hi.size, lo.size], float))
    return float(f[0] - f[1]), hi.truncated or lo.truncated


def coupled_finite_difference(t: float, delta: float, model: ConnectionModel, limits: ExplorationLimits,
                              reps: int, seed: int, payload: Payload = INVERSE, *, mark=None,
                              workers: int = 1) -> Estimate:
    """Central difference (E_{t+delta} f - E_{t-delta} f) / (2 delta).

    Each replication explores at ``t + delta`` and thins the same cluster down to
    ``t - delta``, so both ends share randomness.
    """
    if not 0 < delta <= t:
        raise ValueError("need 0 < delta <= t")
    task = partial(_fd_task, t_hi=t + delta, t_lo=t - delta, model=model, limits=limits, payload=payload,
                   mark=mark)
    res = run_replications(task, reps, seed, f"fd:{t!r}:{delta!r}", workers)
    diffs = np.array([r[0] for r in res]) / (2 * delta)
    return Accumulator.of(diffs, censored=sum(r[1] for r in res)).estimate()


# ---------------------------------------------------------------------------
# window estimators


@dataclass
class KappaWindowSample:
    mid: float
    free: float
    wired: float
    representative: float


def estimate_kappa_window(coupled, window: Window, box: Window | None = None) -> KappaWindowSample:
    """Per-realisation estimates of t kappa(t) from one free/mid/wired triple.

    ``mid`` is sum over inner vertices of 1/|C| per unit volume, ``free`` and
    ``wired`` the corresponding cluster counts (upper and lower bracket).
    """
    stats = coupled.stats
    vol = window.volume
    rep = cluster_representative_count(coupled.mid, box or window)
    return KappaWindowSample(float(stats.m_mid) / vol, stats.m_free / vol, stats.m_wired / vol, rep)


def cluster_representative_count(graph: GraphSample, box: Window) -> float:
    """Finite clusters whose lexicographically smallest point lies in ``box``, per unit volume of box.

    Clusters touching the shell count as infinite and are skipped.
    """
    n = len(graph)
    if n == 0:
        return 0.0
    loc = graph.config.locations
    order = np.lexsort(loc.T[::-1])
    roots = graph.roots[order]
    _, first = np.unique(roots, return_index=True)
    reps_idx = order[first]
    ok = ~graph.touches_shell[reps_idx] & box.contains(loc[reps_idx])
    return float(ok.sum()) / box.volume


def _kappa_window_task(k, stream, window, shell_width, t, t0, model, box):
    cg = coupled_boundary_graphs(window, shell_width, t, t0, model, stream.generator())
    s = estimate_kappa_window(cg, window, box)
    return s.mid, s.free, s.wired, s.representative, cg.stats.sandwich_holds()


def kappa_window_estimates(window: Window, shell_width: float, t: float, model: ConnectionModel, reps: int,
                           seed: int, *, t0: float | None = None, box: Window | None = None,
                           workers: int = 1) -> dict:
    task = partial(_kappa_window_task, window=window, shell_width=shell_width, t=t,
                   t0=t if t0 is None else t0, model=model, box=box)
    res = np.array(run_replications(task, reps, seed, f"kappa-window:{t!r}", workers), float)
    return {"mid": Estimate.from_samples(res[:, 0]), "free": Estimate.from_samples(res[:, 1]),
            "wired": Estimate.from_samples(res[:, 2]), "representative": Estimate.from_samples(res[:, 3]),
            "sandwich_rate": float(res[:, 4].mean())}


# ---------------------------------------------------------------------------
# convexity sweep on a torus


def _torus_task(k, stream, t, model, window, n_probe, delta):
    gen = stream.generator()
    vol = window.volume
    cfg = sample_poisson(window, t, model.marks, gen)
    g = build_graph(cfg, model, gen)
    t_kappa = g.n_clusters / vol
    n0 = 0
    for _ in range(n_probe):
        x = np.asarray(window.lower) + gen.random(window.dim) * window.sides
        p = model.marks.sample(gen, 1)[0]
        n0 += added_vertex_split_counts(g, model, x, p, gen)[0]
    # coupled central difference: thin a (t + delta) sample down to (t - delta)
    hi_cfg = sample_poisson(window, t + delta, model.marks, gen)
    key = draw_key(gen)
    lo_cfg = hi_cfg.subset(gen.random(len(hi_cfg)) * (t + delta) < t - delta, t - delta)
    g_hi = build_graph(hi_cfg, model, key=key)
    g_lo = build_graph(lo_cfg, model, key=key)
    fd = (g_hi.n_clusters - g_lo.n_clusters) / vol / (2 * delta)
    return t_kappa, 1.0 - n0 / n_probe if n_probe else math.nan, fd


@dataclass
class SweepResult:
    grid: np.ndarray
    t_kappa: list[Estimate]
    derivative_fd: list[Estimate]
    derivative_split: list[Estimate]
    d_phi: float
    second_differences: np.ndarray = field(default=None)
    second_difference_stderr: np.ndarray = field(default=None)
    theta: list[Estimate] | None = None
    t_kappa_explorer: list[Estimate] | None = None

    def __post_init__(self):
        if np.any(np.diff(self.grid) <= 0):
            raise ValueError("t grid must be strictly increasing")
        g = np.array([e.value for e in self.t_kappa]) + self.d_phi * self.grid**2 / 2
        se = np.array([e.stderr for e in self.t_kappa])
        t = self.grid
        sd, sds = [], []
        for i in range(1, len(t) - 1):
            h1, h2 = t[i] - t[i - 1], t[i + 1] - t[i]
            # second divided difference times 2, weights on g[i-1], g[i], g[i+1]
            c = np.array([2 / (h1 * (h1 + h2)), -2 / (h1 * h2), 2 / (h2 * (h1 + h2))])
            sd.append(float(c @ g[i - 1:i + 2]))
            sds.append(float(np.sqrt(np.sum((c * se[i - 1:i + 2]) ** 2))))
        self.second_differences = np.array(sd)
        self.second_difference_stderr = np.array(sds)

    def convex_within(self, k: float = 3.0) -> bool:
        return bool(np.all(self.second_differences >= -k * self.second_difference_stderr))

    def derivative_agreement(self, k: float = 3.0) -> np.ndarray:
        return np.array([agree(a, b, k) for a, b in zip(self.derivative_fd, self.derivative_split)])


def kappa_sweep_and_convexity(grid, model: ConnectionModel, reps: int, seed: int, *, side: float = 30.0,
                              n_probe: int = 100, rel_delta: float = 0.05, explorer_reps: int = 0,
                              limits: ExplorationLimits | None = None, workers: int = 1) -> SweepResult:
    """Per-t torus estimates of t kappa(t), its derivative by coupled central
    differences, and 1 - E N0 from vertices added at uniform positions."""
    grid = np.asarray(grid, float)
    if len(grid) < 5:
        raise ValueError("convexity sweep needs at least 5 grid points")
    window = Window.box(side, model.dim, "torus")
    window.check_range(model.range_bound)
    tk, fd, sp, theta, tke = [], [], [], [], []
    for t in grid:
        delta = rel_delta * t
        if t == 0:
            tk.append(Estimate(0.0, 0.0, reps))
            fd.append(Estimate(1.0, 0.0, reps))
            sp.append(Estimate(1.0, 0.0, reps))
            continue
        task = partial(_torus_task, t=float(t), model=model, window=window, n_probe=n_probe, delta=delta)
        res = np.array(run_replications(task, reps, seed, f"sweep:{t!r}", workers), float)
        tk.append(Estimate.from_samples(res[:, 0]))
        sp.append(Estimate.from_samples(res[:, 1]))
        fd.append(Estimate.from_samples(res[:, 2]))
        if explorer_reps:
            lim = limits or ExplorationLimits()
            clusters = sample_clusters(float(t), model, explorer_reps, seed, limits=lim, with_phi_lambda=False,
                                       label="sweep-explorer", workers=workers)
            tke.append(kappa_from_clusters(clusters, float(t)))
            theta.append(Estimate.from_samples([c.truncated or c.size >= lim.max_vertices for c in clusters]))
    return SweepResult(grid, tk, fd, sp, model.d_phi, theta=theta or None, t_kappa_explorer=tke or None)


# ---------------------------------------------------------------------------
# nu measure


@dataclass
class EmpiricalWeightMeasure:
    """Surrogate of nu_n: atoms at observed phi_lambda values of size-n clusters,
    each weighted exp(t0 phi_lambda) / t0^(n-1) / (number of explorations).

    The t0^(n-1) factor makes the measure the same for every sampling intensity.
    """

    n: int
    t0: float
    values: np.ndarray
    weights: np.ndarray
    n_total: int

    @classmethod
    def from_samples(cls, samples: Sequence[WeightedSample], n: int) -> "EmpiricalWeightMeasure":
        t0 = samples[0].t0
        vals = np.sort(np.array([s.phi_lambda for s in samples if s.size == n and not s.truncated]))
        return cls(n, t0, vals, np.exp(t0 * vals - (n - 1) * math.log(t0)), len(samples))

    def mass(self, u: float) -> Estimate:
        """nu_n[0, u] with its Monte Carlo stderr."""
        k = int(np.searchsorted(self.values, u, side="right"))
        w = self.weights[:k]
        s1, s2 = float(w.sum()), float((w * w).sum())
        n = self.n_total
        mean = s1 / n
        var = (s2 / n - mean * mean) * n / (n - 1) if n > 1 else math.inf
        return Estimate(mean, math.sqrt(max(var, 0.0) / n), n)


def nu_bound(n: int, u):
    u = np.asarray(u, float)
    return (math.e * u / (n - 1)) ** (n - 1)


def nu_bound_check(samples: Sequence[WeightedSample], n: int, u_grid) -> dict:
    """Compare the empirical nu_n[0, u] with b(u) = (e u / (n - 1))^{n - 1} on a grid.

    A grid point is a violation when the estimate exceeds b(u) (1 + 3 stderr).
    ``violation_additive`` records the stricter b(u) + 3 stderr rule as a diagnostic.
    """
    if n < 2:
        raise ValueError("the bound applies for n >= 2")
    measure = EmpiricalWeightMeasure.from_samples(samples, n)
    rows = []
    for u in np.asarray(u_grid, float):
        est = measure.mass(u)
        b = float(nu_bound(n, u))
        rows.append({"u": float(u), "nu": est.value, "stderr": est.stderr, "bound": b,
                     "violation": bool(est.value > b * (1 + 3 * est.stderr)),
                     "violation_additive": bool(est.value > b + 3 * est.stderr)})
    return {"n": n, "rows": rows, "violations": sum(r["violation"] for r in rows),
            "violations_additive": sum(r["violation_additive"] for r in rows)}
