"""Experiment configuration: parsing, normalisation, validation and hashing."""
from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .explorer import ExplorationLimits
from .model import DEFAULT_MAX_EXPECTED_POINTS, ConnectionModel, ModelError, Window, make_model

KINDS = ("simulate", "explore", "sweep", "reweight-check", "derivative-check", "convexity", "irreducibility",
         "uniqueness-probe", "consistency-suite")
EXPLORER_KINDS = ("explore", "sweep", "reweight-check", "derivative-check")
SEED_ENV = "RCMLAB_SEED"


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems) if not isinstance(problems, str) else [problems]
        super().__init__("; ".join(self.problems))


@dataclass
class ExperimentConfig:
    kind: str
    model: dict = field(default_factory=lambda: {"name": "gilbert", "params": {}, "dim": 2})
    window: dict = field(default_factory=lambda: {"side": 20.0, "boundary_mode": "free"})
    t: float | None = None
    t_grid: list | None = None
    t0: float | None = None
    shell_width: float | None = None
    limits: dict = field(default_factory=dict)
    reps: int = 100
    seed: int | None = None
    workers: int = 1
    output: str | None = None
    max_expected_points: float = DEFAULT_MAX_EXPECTED_POINTS
    options: dict = field(default_factory=dict)

    # -- building blocks ---------------------------------------------
    def build_model(self) -> ConnectionModel:
        spec = self.model
        return make_model(spec.get("name", "gilbert"), spec.get("params", {}), int(spec.get("dim", 2)))

    def build_window(self) -> Window:
        w = self.window
        dim = int(self.model.get("dim", 2))
        mode = w.get("boundary_mode", "free")
        if "lower" in w or "upper" in w:
            return Window(tuple(w["lower"]), tuple(w["upper"]), mode)
        return Window.box(float(w.get("side", 20.0)), dim, mode)

    def build_limits(self) -> ExplorationLimits:
        return ExplorationLimits(**self.limits)

    def t_values(self) -> list[float]:
        if self.t_grid is not None:
            return [float(v) for v in self.t_grid]
        return [] if self.t is None else [float(self.t)]

    # -- identity ------------------------------------------------------
    def to_dict(self) -> dict:
        return asdict(self)

    def config_hash(self) -> str:
        """Hash of everything that affects results except the seed (and bookkeeping)."""
        d = self.to_dict()
        for k in ("seed", "workers", "output"):
            d.pop(k)
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"), allow_nan=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


_FIELDS = set(ExperimentConfig.__dataclass_fields__)


def parse_config(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(data) - _FIELDS)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    if "kind" not in data:
        raise ConfigError("config needs a 'kind'")
    cfg = ExperimentConfig(**data)
    model = {"name": "gilbert", "params": {}, "dim": 2}
    model.update(cfg.model or {})
    cfg.model = model
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    return parse_config(data)


def resolve_seed(cli_seed: int | None, cfg: ExperimentConfig, env=None) -> int:
    """CLI flag, then config file, then the environment variable, then 0."""
    env = os.environ if env is None else env
    for source in (cli_seed, cfg.seed, env.get(SEED_ENV)):
        if source is None or source == "":
            continue
        try:
            seed = int(source)
        except (TypeError, ValueError):
            raise ConfigError(f"seed {source!r} is not an integer") from None
        if not 0 <= seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        return seed
    return 0


def validate(cfg: ExperimentConfig) -> list[str]:
    """All problems with the configuration, without running anything."""
    problems = []
    if cfg.kind not in KINDS:
        problems.append(f"unknown kind {cfg.kind!r}; expected one of {', '.join(KINDS)}")
    model = None
    try:
        model = cfg.build_model()
    except (ModelError, TypeError, ValueError) as exc:
        problems.append(f"model: {exc}")
    window = None
    try:
        window = cfg.build_window()
    except (ModelError, TypeError, ValueError, KeyError) as exc:
        problems.append(f"window: {exc}")
    try:
        cfg.build_limits()
    except (TypeError, ValueError) as exc:
        problems.append(f"limits: {exc}")
    ts = cfg.t_values()
    for t in ts:
        if not t >= 0:
            problems.append(f"intensity t={t} is negative")
    if cfg.t_grid is not None and any(b <= a for a, b in zip(ts, ts[1:])):
        problems.append("t_grid must be strictly increasing")
    if cfg.t0 is not None:
        if not cfg.t0 > 0:
            problems.append(f"t0={cfg.t0} must be positive")
        elif cfg.kind in ("simulate", "reweight-check") and any(t > cfg.t0 for t in ts):
            problems.append("coupling requires t <= t0")
    if not isinstance(cfg.reps, int) or cfg.reps <= 0:
        problems.append("reps must be a positive integer")
    if not isinstance(cfg.workers, int) or cfg.workers <= 0:
        problems.append("workers must be a positive integer")
    needs_t = cfg.kind in ("simulate", "explore", "reweight-check", "derivative-check", "uniqueness-probe")
    if needs_t and not ts:
        problems.append(f"kind {cfg.kind} needs t or t_grid")
    if cfg.kind == "reweight-check" and cfg.t0 is None:
        problems.append("reweight-check needs t0")
    if cfg.kind == "convexity" and len(ts) < 5:
        problems.append("convexity needs a t_grid of at least 5 points")
    if model is not None:
        problems += model.validate()
        R = model.range_bound
        if cfg.kind in EXPLORER_KINDS and not model.has_envelope:
            problems.append(f"model {model.tag} has unbounded range and no radial envelope; cannot explore")
        if window is not None:
            if window.dim != model.dim:
                problems.append(f"window dimension {window.dim} differs from model dimension {model.dim}")
            elif window.torus and (not math.isfinite(R) or any(s < 2 * R for s in window.sides)):
                problems.append(f"torus side {min(window.sides):g} is below twice the range bound {R:g}")
            t_max = max(ts + ([cfg.t0] if cfg.t0 else []), default=0.0)
            vol = window.volume
            if cfg.shell_width is not None:
                vol = window.expanded(cfg.shell_width).volume
            if t_max * vol > cfg.max_expected_points:
                problems.append(f"expected point count {t_max * vol:g} exceeds the cap {cfg.max_expected_points:g}")
        if cfg.shell_width is not None:
            if not math.isfinite(R):
                problems.append("a boundary shell needs a finite range bound")
            elif cfg.shell_width < R:
                problems.append(f"shell_width {cfg.shell_width:g} is below the range bound {R:g}")
    return problems
