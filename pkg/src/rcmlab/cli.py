"""Command line entry point: ``rcmlab run`` and ``rcmlab validate``."""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import time
from pathlib import Path

from .config import ConfigError, load_config, resolve_seed, validate
from .experiments import _atomic_write, _clean, run_experiment
from .graph import GraphError
from .model import ModelError, QuadratureError

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_FAILED = 0, 1, 2, 3
CSV_COLUMNS = ["quantity", "t", "t0", "value", "stderr", "n", "censored", "config_hash", "seed"]

log = logging.getLogger("rcmlab")


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def render_csv(records, config_hash: str, seed: int) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        w.writerow([r.quantity, _fmt(r.t), _fmt(r.t0), _fmt(r.value), _fmt(r.stderr), r.n, _fmt(r.censored),
                    config_hash, seed])
    return buf.getvalue()


def render_json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
        if args.workers is not None:
            cfg.workers = args.workers
        problems = validate(cfg)
        if problems:
            raise ConfigError(problems)
        seed = resolve_seed(args.seed, cfg)
    except ConfigError as exc:
        for p in exc.problems:
            print(f"config error: {p}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = Path(args.out or cfg.output or "results")
    chash = cfg.config_hash()
    start = time.perf_counter()
    try:
        result = run_experiment(cfg, seed, out_dir)
    except (ModelError, GraphError, QuadratureError, MemoryError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    log.info("%s finished in %.1fs", cfg.kind, time.perf_counter() - start)
    records = [dict(vars(r), config_hash=chash, seed=seed) for r in result.records]
    if args.format == "csv":
        _atomic_write(out_dir / "results.csv", render_csv(result.records, chash, seed))
    else:
        _atomic_write(out_dir / "results.json", render_json(records))
    summary = {"kind": cfg.kind, "seed": seed, "config_hash": chash, "config": cfg.to_dict(),
               "passed": result.passed, "details": result.details, "records": records}
    _atomic_write(out_dir / "summary.json", render_json(summary))
    for r in result.records:
        print(f"{r.quantity}\tt={_fmt(r.t)}\t{r.value:.6g} +- {r.stderr:.3g}")
    if cfg.kind == "consistency-suite" and not result.passed:
        return EXIT_FAILED
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        for p in exc.problems:
            print(p)
        return EXIT_CONFIG
    problems = validate(cfg)
    for p in problems:
        print(p)
    return EXIT_CONFIG if problems else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rcmlab", description="Random connection model experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run the experiment described by a config file")
    run.add_argument("--config", required=True)
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--workers", type=int, default=None)
    run.add_argument("--out", default=None)
    run.add_argument("--format", choices=("csv", "json"), default="csv")
    run.set_defaults(func=cmd_run)
    val = sub.add_parser("validate", help="list configuration problems without running")
    val.add_argument("--config", required=True)
    val.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
