"""Experiment kinds: each turns a validated config into result records and a summary."""
from __future__ import annotations

import math
import os
import tempfile
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path

import numpy as np

from . import checks
from . import estimators as est
from .config import ExperimentConfig
from .explorer import ClusterSample, sample_clusters
from .graph import build_graph, coupled_boundary_graphs, write_graph
from .irreducibility import MarkGrid, build_kernel_matrix, check_irreducible
from .model import ConnectionModel, sample_poisson
from .parallel import run_replications


@dataclass
class ResultRecord:
    quantity: str
    t: float | None
    t0: float | None
    value: float
    stderr: float
    n: int
    censored: float = 0.0

    @classmethod
    def of(cls, quantity, e: est.Estimate, t=None, t0=None) -> "ResultRecord":
        return cls(quantity, t, t0, e.value, e.stderr, e.n_samples, e.censored_mass)


@dataclass
class ExperimentResult:
    records: list[ResultRecord] = field(default_factory=list)
    details: dict = field(default_factory=dict)
    passed: bool | None = None


def run_experiment(cfg: ExperimentConfig, seed: int, out_dir: Path | None = None) -> ExperimentResult:
    runner = _KINDS[cfg.kind]
    return runner(cfg, seed, out_dir)


def _p1_closed_form(model: ConnectionModel, t: float) -> float:
    nodes, w = model.marks.quadrature()
    return float(w @ np.exp(-t * model.degree_integral(nodes)))


# -- simulate --------------------------------------------------------------


def _simulate_task(k, stream, window, t, t0, shell, model, dump):
    gen = stream.generator()
    if shell is None:
        cfg = sample_poisson(window, t, model.marks, gen)
        g = build_graph(cfg, model, gen)
        if dump is not None and k == 0:
            write_graph(g, dump[0], dump[1])
        largest = float(g.cluster_size.max()) / len(g) if len(g) else 0.0
        return {"points": len(g), "edges": g.n_edges, "clusters": g.n_clusters, "largest_fraction": largest,
                "t_kappa": g.n_clusters / window.volume}
    cg = coupled_boundary_graphs(window, shell, t, t0, model, gen)
    if dump is not None and k == 0:
        write_graph(cg.mid, dump[0], dump[1])
    s = cg.stats
    vol = window.volume
    return {"points": s.n_inner, "edges": cg.mid.n_edges, "clusters_free": s.m_free / vol,
            "clusters_mid": float(s.m_mid) / vol, "clusters_wired": s.m_wired / vol, "ds_rate": s.ds_rate,
            "sandwich": float(s.sandwich_holds())}


def _simulate(cfg, seed, out_dir):
    model, window = cfg.build_model(), cfg.build_window()
    res = ExperimentResult()
    dump = None
    if cfg.options.get("dump_graph") and out_dir is not None:
        dump = (str(Path(out_dir) / "graph"), bool(cfg.options.get("gzip", False)))
    for t in cfg.t_values():
        t0 = cfg.t0 if cfg.t0 is not None else t
        task = partial(_simulate_task, window=window, t=t, t0=t0, shell=cfg.shell_width, model=model, dump=dump)
        rows = run_replications(task, cfg.reps, seed, f"simulate:{t!r}", cfg.workers)
        for key in rows[0]:
            res.records.append(ResultRecord.of(key, est.Estimate.from_samples([r[key] for r in rows]), t,
                                               t0 if cfg.shell_width is not None else None))
    return res


# -- explorer kinds -----------------------------------------------------------


def _cluster_records(clusters: list[ClusterSample], t, model, n_max, limits):
    out = []
    pmf = est.pmf_from_clusters(clusters, n_max)
    for n, e in enumerate(pmf.pmf, start=1):
        out.append(ResultRecord.of(f"p_{n}", e, t))
    out.append(ResultRecord.of("censored_mass", pmf.censored, t))
    out.append(ResultRecord("p_1_closed_form", t, None, _p1_closed_form(model, t), 0.0, 0))
    out.append(ResultRecord.of("t_kappa", est.kappa_from_clusters(clusters, t), t))
    hit = [c.truncated or c.size >= limits.max_vertices for c in clusters]
    out.append(ResultRecord.of("theta_proxy", est.Estimate.from_samples(hit, sum(c.truncated for c in clusters)), t))
    finite = [c.size for c in clusters if not c.truncated]
    if finite:
        out.append(ResultRecord.of("mean_finite_size", est.Estimate.from_samples(finite), t))
    return out


def _dump_clusters(path: Path, rows):
    import csv
    import io

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "size", "generations", "phi_lambda", "truncated"])
    w.writerows(rows)
    _atomic_write(path, buf.getvalue())


def _explore(cfg, seed, out_dir):
    model, limits = cfg.build_model(), cfg.build_limits()
    n_max = int(cfg.options.get("n_max", 10))
    with_phi = bool(cfg.options.get("phi_lambda", False))
    res = ExperimentResult()
    dump_rows = []
    for t in cfg.t_values():
        clusters = sample_clusters(t, model, cfg.reps, seed, limits=limits, with_phi_lambda=with_phi,
                                   workers=cfg.workers)
        res.records += _cluster_records(clusters, t, model, n_max, limits)
        if with_phi:
            samples = [est.WeightedSample.from_cluster(c, t) for c in clusters]
            ident = est.mean_size_identity(samples, t)
            res.records.append(ResultRecord.of("mean_size_identity_difference", ident["difference"], t))
        if cfg.options.get("dump_clusters"):
            dump_rows += [[t, c.size, c.n_generations, c.phi_lambda, int(c.truncated)] for c in clusters]
    if dump_rows and out_dir is not None:
        _dump_clusters(Path(out_dir) / "clusters.csv", dump_rows)
    return res


def _sweep(cfg, seed, out_dir):
    model, limits = cfg.build_model(), cfg.build_limits()
    res = ExperimentResult()
    for t in cfg.t_values():
        clusters = sample_clusters(t, model, cfg.reps, seed, limits=limits, with_phi_lambda=False,
                                   label="sweep", workers=cfg.workers)
        res.records += _cluster_records(clusters, t, model, int(cfg.options.get("n_max", 5)), limits)
    return res


def _reweight_check(cfg, seed, out_dir):
    model, limits = cfg.build_model(), cfg.build_limits()
    n_max = int(cfg.options.get("n_max", 10))
    t0 = float(cfg.t0)
    base = sample_clusters(t0, model, cfg.reps, seed, limits=limits, label="reweight-t0", workers=cfg.workers)
    samples = [est.WeightedSample.from_cluster(c, t0) for c in base]
    res = ExperimentResult(passed=True)
    reps_direct = int(cfg.options.get("direct_reps", cfg.reps))
    for t in cfg.t_values():
        rew, ess = est.reweighted_pmf(samples, t, n_max)
        direct = est.pmf_from_clusters(sample_clusters(t, model, reps_direct, seed, limits=limits,
                                                       with_phi_lambda=False, label="reweight-direct",
                                                       workers=cfg.workers), n_max).pmf
        for n, (a, b) in enumerate(zip(rew, direct), start=1):
            res.records.append(ResultRecord.of(f"p_{n}_reweighted", a, t, t0))
            res.records.append(ResultRecord.of(f"p_{n}_direct", b, t))
            res.passed &= est.agree(a, b)
        res.records.append(ResultRecord("ess_fraction", t, t0, ess, 0.0, len(samples)))
    return res


def _derivative_check(cfg, seed, out_dir):
    model, limits = cfg.build_model(), cfg.build_limits()
    payload = est.payload_by_name(cfg.options.get("payload", "inverse"))
    res = ExperimentResult(passed=True)
    for t in cfg.t_values():
        clusters = sample_clusters(t, model, cfg.reps, seed, limits=limits, label="mr", workers=cfg.workers)
        mr = est.mr_derivative([est.WeightedSample.from_cluster(c, t) for c in clusters], t, payload,
                               allow_nondecaying=bool(cfg.options.get("allow_nondecaying", False)))
        delta = float(cfg.options.get("delta", 0.05 * t))
        fd = est.coupled_finite_difference(t, delta, model, limits, cfg.reps, seed, payload, workers=cfg.workers)
        res.records.append(ResultRecord.of(f"derivative_mr[{payload.name}]", mr, t))
        res.records.append(ResultRecord.of(f"derivative_fd[{payload.name}]", fd, t))
        res.passed &= est.agree(mr, fd)
    return res


# -- window kinds -------------------------------------------------------------


def _convexity(cfg, seed, out_dir):
    model = cfg.build_model()
    side = float(cfg.window.get("side", 30.0))
    sweep = est.kappa_sweep_and_convexity(cfg.t_values(), model, cfg.reps, seed, side=side,
                                          n_probe=int(cfg.options.get("n_probe", 100)),
                                          rel_delta=float(cfg.options.get("rel_delta", 0.05)),
                                          explorer_reps=int(cfg.options.get("explorer_reps", 0)),
                                          limits=cfg.build_limits(), workers=cfg.workers)
    res = ExperimentResult(passed=sweep.convex_within())
    for i, t in enumerate(sweep.grid):
        t = float(t)
        res.records.append(ResultRecord.of("t_kappa", sweep.t_kappa[i], t))
        res.records.append(ResultRecord.of("d_t_kappa_fd", sweep.derivative_fd[i], t))
        res.records.append(ResultRecord.of("one_minus_mean_n0", sweep.derivative_split[i], t))
        if sweep.t_kappa_explorer:
            res.records.append(ResultRecord.of("t_kappa_explorer", sweep.t_kappa_explorer[i], t))
            res.records.append(ResultRecord.of("theta_proxy", sweep.theta[i], t))
    for i, (v, s) in enumerate(zip(sweep.second_differences, sweep.second_difference_stderr), start=1):
        res.records.append(ResultRecord("second_difference", float(sweep.grid[i]), None, float(v), float(s),
                                        cfg.reps))
    res.details["derivative_agreement"] = sweep.derivative_agreement().tolist()
    return res


def _irreducibility(cfg, seed, out_dir):
    model = cfg.build_model()
    grid = MarkGrid.from_distribution(model.marks, int(cfg.options.get("grid_size", 32)))
    atoms = cfg.options.get("atoms")
    report = check_irreducible(build_kernel_matrix(model, grid), cfg.options.get("positivity_tol"), atoms=atoms)
    res = ExperimentResult(details={"report": report.to_dict()})
    res.records.append(ResultRecord("irreducible", None, None, float(report.verdict == "irreducible"), 0.0,
                                    len(grid)))
    res.records.append(ResultRecord("blocks", None, None, float(len(report.blocks)), 0.0, len(grid)))
    return res


def _uniqueness_probe(cfg, seed, out_dir):
    model = cfg.build_model()
    sides = cfg.options.get("sides", [10, 20, 40])
    shell = cfg.shell_width if cfg.shell_width is not None else model.range_bound
    res = ExperimentResult()
    for t in cfg.t_values():
        check = checks.deletion_stability(t, sides, cfg.reps, seed, shell=shell, model=model, workers=cfg.workers,
                                          threshold=float(cfg.options.get("threshold", 0.01)))
        for row in check.details["rows"]:
            res.records.append(ResultRecord(f"ds_rate[side={row['side']}]", t, None, row["rate"], row["stderr"],
                                            cfg.reps))
        res.details[f"t={t}"] = check.details
    return res


# -- consistency suite --------------------------------------------------------


def consistency_suite(budget: float, seed: int, workers: int = 1) -> list[checks.CheckResult]:
    """All property checks, with Monte Carlo budgets scaled by ``budget`` (1.0 = full acceptance size)."""

    def n(full, floor=50):
        return max(floor, int(round(full * budget)))

    m = checks.gilbert()
    t0_clusters = sample_clusters(1.0, m, n(20_000), seed, label="reweight-t0", workers=workers)
    out = [checks.isolation_probability(0, seed, clusters=t0_clusters)]
    out += list(checks.boundary_coupling(n(1000), seed, workers=workers))
    out.append(checks.reweighting(0, n(20_000), seed, clusters_t0=t0_clusters, workers=workers))
    mr_clusters = {t: sample_clusters(t, m, n(50_000), seed, label="mr", workers=workers) for t in (0.4, 0.8)}
    out.append(checks.derivative_vs_finite_difference([0.4, 0.8], n(50_000), seed, workers=workers,
                                                      clusters_by_t=mr_clusters))
    out.append(checks.mean_size_identity(0.4, 0, seed, clusters=mr_clusters[0.4]))
    conv, deriv, _ = checks.convexity(np.linspace(0.2, 1.4, 7), n(300, 20), seed, n_probe=n(200, 20),
                                      workers=workers)
    out += [conv, deriv]
    out.append(checks.explorer_window(0.4, 40.0, n(10_000), seed, workers=workers))
    out.append(checks.irreducibility_verdicts())
    out.append(checks.nu_bound(0, seed, clusters=t0_clusters))
    out.append(checks.scaling_coupling(n(200, 20), seed, workers=workers))
    out.append(checks.kappa_estimators(0.5, n(400, 20), n(20_000), seed, workers=workers))
    out.append(checks.deletion_stability(2.0, [10, 20, 40], n(50, 10), seed, workers=workers))
    return out


def _consistency(cfg, seed, out_dir):
    results = consistency_suite(float(cfg.options.get("budget", 0.05)), seed, cfg.workers)
    res = ExperimentResult(passed=all(r.passed for r in results))
    for r in results:
        res.records.append(ResultRecord(f"check:{r.name}", None, None, float(r.passed), 0.0, 1))
        res.details[r.name] = r.details
    return res


_KINDS = {
    "simulate": _simulate,
    "explore": _explore,
    "sweep": _sweep,
    "reweight-check": _reweight_check,
    "derivative-check": _derivative_check,
    "convexity": _convexity,
    "irreducibility": _irreducibility,
    "uniqueness-probe": _uniqueness_probe,
    "consistency-suite": _consistency,
}


def _atomic_write(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj
