"""Property checks shared by the consistency suite and the test-suite.

Each check runs a Monte Carlo experiment at a given budget and returns a
:class:`CheckResult` with the numbers it compared.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from . import estimators as est
from .explorer import ExplorationLimits, explorer_vs_window_consistency, sample_clusters
from .graph import build_graph, coupled_boundary_graphs, is_subgraph, scaling_coupled_sweep
from .irreducibility import KernelMatrix, MarkGrid, build_kernel_matrix, check_irreducible
from .model import ConnectionModel, Window, make_model, sample_poisson
from .parallel import run_replications


@dataclass
class CheckResult:
    name: str
    passed: bool
    details: dict = field(default_factory=dict)

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}"


def gilbert(radius: float = 0.5, dim: int = 2) -> ConnectionModel:
    return make_model("gilbert", {"radius": radius}, dim)


def _within(a, b, se, k=3.0):
    return abs(a - b) <= k * se


# -- explorer checks --------------------------------------------------------


def isolation_probability(reps: int, seed: int, t: float = 1.0, model=None, workers: int = 1,
                          clusters=None) -> CheckResult:
    model = model or gilbert()
    if clusters is None:
        clusters = sample_clusters(t, model, reps, seed, with_phi_lambda=False, label="isolation", workers=workers)
    p1 = est.Estimate.from_samples([c.size == 1 for c in clusters])
    expected = math.exp(-t * model.d_phi)
    return CheckResult("isolation probability", _within(p1.value, expected, p1.stderr),
                       {"p1": p1.value, "stderr": p1.stderr, "expected": expected, "n": p1.n_samples})


def reweighting(reps_t0: int, reps_direct: int, seed: int, t0: float = 1.0, t: float = 0.6, n_max: int = 10,
                model=None, workers: int = 1, clusters_t0=None) -> CheckResult:
    model = model or gilbert()
    if clusters_t0 is None:
        clusters_t0 = sample_clusters(t0, model, reps_t0, seed, label="reweight-t0", workers=workers)
    samples = [est.WeightedSample.from_cluster(c, t0) for c in clusters_t0]
    rew, ess = est.reweighted_pmf(samples, t, n_max)
    direct = sample_clusters(t, model, reps_direct, seed, with_phi_lambda=False, label="reweight-direct",
                             workers=workers)
    pmf = est.pmf_from_clusters(direct, n_max).pmf
    z = [(a.value - b.value) / max(est.combined_stderr(a, b), 1e-300) for a, b in zip(rew, pmf)]
    ok_bins = all(abs(v) <= 3 for v in z)
    return CheckResult("reweighting oracle", ok_bins and ess >= 0.30,
                       {"reweighted": [e.value for e in rew], "direct": [e.value for e in pmf],
                        "z": z, "ess_fraction": ess})


def derivative_vs_finite_difference(t_values, reps: int, seed: int, delta: float = 0.05, model=None,
                                    workers: int = 1, clusters_by_t: dict | None = None) -> CheckResult:
    """``clusters_by_t`` may supply the explorations (with phi_lambda) for each t."""
    model = model or gilbert()
    limits = ExplorationLimits()
    clusters_by_t = clusters_by_t or {}
    rows = []
    for t in t_values:
        clusters = clusters_by_t.get(t)
        if clusters is None:
            clusters = sample_clusters(t, model, reps, seed, limits=limits, label="mr", workers=workers)
        samples = [est.WeightedSample.from_cluster(c, t) for c in clusters]
        mr = est.mr_derivative(samples, t, est.INVERSE)
        fd = est.coupled_finite_difference(t, delta, model, limits, reps, seed, est.INVERSE, workers=workers)
        se = est.combined_stderr(mr, fd)
        rows.append({"t": t, "mr": mr.value, "mr_stderr": mr.stderr, "fd": fd.value, "fd_stderr": fd.stderr,
                     "z": (mr.value - fd.value) / se, "passed": _within(mr.value, fd.value, se)})
    return CheckResult("derivative vs finite difference", all(r["passed"] for r in rows), {"rows": rows})


def mean_size_identity(t: float, reps: int, seed: int, model=None, workers: int = 1, clusters=None) -> CheckResult:
    model = model or gilbert()
    if clusters is None:
        clusters = sample_clusters(t, model, reps, seed, label="mr", workers=workers)
    res = est.mean_size_identity([est.WeightedSample.from_cluster(c, t) for c in clusters], t)
    diff = res["difference"]
    return CheckResult("mean-size identity", _within(diff.value, 0.0, diff.stderr),
                       {"size_minus_one": res["size_minus_one"].value, "t_phi_lambda": res["t_phi_lambda"].value,
                        "difference": diff.value, "stderr": diff.stderr})


def explorer_window(t: float, side: float, reps: int, seed: int, model=None, workers: int = 1) -> CheckResult:
    model = model or gilbert()
    max_gen = int(side // (2 * model.range_bound))
    rep = explorer_vs_window_consistency(model, t, Window.box(side, model.dim), ExplorationLimits(max_generations=max_gen),
                                         reps, seed, workers=workers)
    return CheckResult("explorer/window consistency", rep.passed, rep.to_dict())


def nu_bound(reps: int, seed: int, t0: float = 1.0, n: int = 2, u_grid=None, model=None, workers: int = 1,
             clusters=None) -> CheckResult:
    model = model or gilbert()
    if clusters is None:
        clusters = sample_clusters(t0, model, reps, seed, label="reweight-t0", workers=workers)
    samples = [est.WeightedSample.from_cluster(c, t0) for c in clusters]
    if u_grid is None:
        u_grid = np.linspace(0.5, 3 * model.d_phi, 20)
    rep = est.nu_bound_check(samples, n, u_grid)
    return CheckResult("nu bound", rep["violations"] == 0, rep)


# -- window checks ----------------------------------------------------------


def _boundary_task(k, stream, window, shell, t, t0, model):
    cg = coupled_boundary_graphs(window, shell, t, t0, model, stream.generator())
    s = cg.stats
    return (s.sandwich_holds(), is_subgraph(cg.free, cg.mid) and is_subgraph(cg.mid, cg.wired),
            s.m_wired, float(s.m_mid), s.m_free)


def boundary_coupling(reps: int, seed: int, side: float = 20.0, shell: float = 1.0, t: float = 0.5,
                      t0: float = 1.0, model=None, workers: int = 1) -> tuple[CheckResult, CheckResult]:
    model = model or gilbert()
    task = partial(_boundary_task, window=Window.box(side, model.dim), shell=shell, t=t, t0=t0, model=model)
    res = run_replications(task, reps, seed, "boundary", workers)
    sandwich = sum(r[0] for r in res)
    chain = sum(r[1] for r in res)
    means = np.mean([r[2:] for r in res], axis=0).tolist()
    return (CheckResult("sandwich inequality", sandwich == reps,
                        {"holds": sandwich, "reps": reps, "mean_wired_mid_free": means}),
            CheckResult("subgraph chain", chain == reps, {"holds": chain, "reps": reps}))


def _scaling_task(k, stream, model, side, radii):
    gen = stream.generator()
    d = model.dim
    cfg = sample_poisson(Window.box(side, d, "torus"), 1.0, model.marks, gen)
    coupled = [g.n_edges for g in scaling_coupled_sweep(cfg, model, radii, gen)]
    direct = []
    for r in radii:
        c = sample_poisson(Window.box(side / r, d, "torus"), r**d, model.marks, gen)
        direct.append(build_graph(c, model, gen).n_edges)
    return coupled + direct


def scaling_coupling(reps: int, seed: int, radii=(0.5, 1.0, 1.5), side: float = 20.0, model=None,
                     workers: int = 1) -> CheckResult:
    model = model or gilbert()
    task = partial(_scaling_task, model=model, side=side, radii=tuple(radii))
    res = np.array(run_replications(task, reps, seed, "scaling", workers), float)
    rows = []
    m = len(radii)
    for i, r in enumerate(radii):
        a = est.Estimate.from_samples(res[:, i])
        b = est.Estimate.from_samples(res[:, m + i])
        se = est.combined_stderr(a, b)
        rows.append({"r": r, "coupled": a.value, "direct": b.value, "stderr": se,
                     "expected": side**model.dim * r**model.dim * model.d_phi / 2,
                     "passed": _within(a.value, b.value, se)})
    return CheckResult("scaling coupling", all(r["passed"] for r in rows), {"rows": rows})


def kappa_estimators(t: float, reps_window: int, reps_explorer: int, seed: int, side: float = 20.0,
                     shell: float = 3.0, box_margin: float = 5.0, model=None, workers: int = 1) -> CheckResult:
    model = model or gilbert()
    window = Window.box(side, model.dim)
    box = Window.box(side - 2 * box_margin, model.dim, origin=box_margin)
    w = est.kappa_window_estimates(window, shell, t, model, reps_window, seed, box=box, workers=workers)
    clusters = sample_clusters(t, model, reps_explorer, seed, with_phi_lambda=False, label="kappa-explorer",
                               workers=workers)
    e = est.kappa_from_clusters(clusters, t)
    trio = {"window": w["mid"], "representative": w["representative"], "explorer": e}
    names = list(trio)
    pairs = []
    for i in range(3):
        for j in range(i + 1, 3):
            a, b = trio[names[i]], trio[names[j]]
            pairs.append({"pair": f"{names[i]}-{names[j]}", "diff": a.value - b.value,
                          "stderr": est.combined_stderr(a, b), "passed": est.agree(a, b)})
    return CheckResult("kappa cross-estimators", all(p["passed"] for p in pairs),
                       {k: v.to_dict() for k, v in trio.items()} | {"pairs": pairs})


def convexity(grid, reps: int, seed: int, side: float = 30.0, n_probe: int = 100, model=None,
              workers: int = 1, interior=(1, 2)) -> tuple[CheckResult, CheckResult, est.SweepResult]:
    model = model or gilbert()
    sweep = est.kappa_sweep_and_convexity(grid, model, reps, seed, side=side, n_probe=n_probe, workers=workers)
    conv = CheckResult("convexity", sweep.convex_within(),
                       {"second_differences": sweep.second_differences.tolist(),
                        "stderr": sweep.second_difference_stderr.tolist()})
    rows = []
    for i in interior:
        a, b = sweep.derivative_fd[i], sweep.derivative_split[i]
        rows.append({"t": float(sweep.grid[i]), "finite_difference": a.value, "split_side": b.value,
                     "stderr": est.combined_stderr(a, b), "passed": est.agree(a, b)})
    deriv = CheckResult("derivative identity", all(r["passed"] for r in rows), {"rows": rows})
    return conv, deriv, sweep


def _ds_task(k, stream, side, shell, t, model):
    cg = coupled_boundary_graphs(Window.box(side, model.dim), shell, t, t, model, stream.generator())
    return cg.stats.n_ds, cg.stats.n_inner


def deletion_stability(t: float, sides, reps: int, seed: int, shell: float = 1.0, model=None,
                       workers: int = 1, threshold: float = 0.01) -> CheckResult:
    model = model or gilbert()
    rows = []
    for side in sides:
        task = partial(_ds_task, side=float(side), shell=shell, t=t, model=model)
        res = np.array(run_replications(task, reps, seed, f"ds:{side!r}", workers), float)
        rate = est.Estimate.from_samples(res[:, 0] / np.maximum(res[:, 1], 1))
        rows.append({"side": side, "rate": rate.value, "stderr": rate.stderr})
    trend = all(b["rate"] <= a["rate"] + 3 * math.hypot(a["stderr"], b["stderr"]) for a, b in zip(rows, rows[1:]))
    small = rows[-1]["rate"] < threshold
    return CheckResult("deletion-stability trend", trend and small, {"rows": rows, "threshold": threshold})


# -- irreducibility -----------------------------------------------------------


def irreducibility_verdicts() -> CheckResult:
    two = make_model("two_block", {"block_sizes": [2, 3]})
    r_two = check_irreducible(build_kernel_matrix(two, MarkGrid.from_distribution(two.marks)))
    weighted = make_model("weighted")
    r_w = check_irreducible(build_kernel_matrix(weighted, MarkGrid.from_distribution(weighted.marks, 32)))
    fac = make_model("factorized", {"kernel": [[1.0, 0.5, 0.2], [0.5, 0.8, 0.3], [0.2, 0.3, 0.6]]})
    r_f = check_irreducible(build_kernel_matrix(fac, MarkGrid.from_distribution(fac.marks)))
    zero_row = KernelMatrix(np.array([[1.0, 0.0, 0.5], [0.0, 0.0, 0.0], [0.5, 0.0, 2.0]]),
                            MarkGrid([0.0, 1.0, 2.0], [0.3, 0.3, 0.4]))
    r_z = check_irreducible(zero_row)
    ok = (r_two.verdict == "reducible" and r_two.blocks == [[0, 1], [2, 3, 4]]
          and r_w.verdict == "irreducible" and r_f.verdict == "irreducible"
          and not r_z.rows_positive and r_z.conditions["isolated"] == [1])
    return CheckResult("irreducibility verdicts", ok,
                       {"two_block": r_two.to_dict(), "weighted": r_w.verdict, "factorized": r_f.verdict,
                        "zero_row": {"verdict": r_z.verdict, "isolated": r_z.conditions["isolated"]}})
