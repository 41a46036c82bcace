"""Windows, mark distributions, connection functions and Poisson sampling."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Any, ClassVar, Sequence

import numpy as np
from scipy import integrate, stats

from .geometry import ball_volume, lens_volume, unit_ball_volume
from .rng import as_generator

DEFAULT_MAX_EXPECTED_POINTS = 10_000_000


class ModelError(ValueError):
    """Invalid model, window or model/window combination."""


class QuadratureError(RuntimeError):
    """A numerical integral did not reach its tolerance."""


@dataclass(frozen=True)
class Window:
    """Axis-aligned box, either with free boundary or periodic (``torus``)."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    boundary_mode: str = "free"

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if len(lo) != len(hi) or not lo:
            raise ModelError("window corners must have the same positive dimension")
        if any(not (b > a) for a, b in zip(lo, hi)) or not all(map(math.isfinite, lo + hi)):
            raise ModelError("window needs upper > lower (finite) on every axis")
        if self.boundary_mode not in ("free", "torus"):
            raise ModelError(f"unknown boundary_mode {self.boundary_mode!r}")

    @classmethod
    def box(cls, side: float, d: int = 2, boundary_mode: str = "free", origin: float = 0.0) -> "Window":
        return cls((origin,) * d, (origin + side,) * d, boundary_mode)

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def sides(self) -> np.ndarray:
        return np.asarray(self.upper) - np.asarray(self.lower)

    @property
    def volume(self) -> float:
        return float(np.prod(self.sides))

    @property
    def torus(self) -> bool:
        return self.boundary_mode == "torus"

    @property
    def center(self) -> np.ndarray:
        return (np.asarray(self.lower) + np.asarray(self.upper)) / 2

    def contains(self, x) -> np.ndarray:
        x = np.atleast_2d(x)
        return np.all((x >= np.asarray(self.lower)) & (x <= np.asarray(self.upper)), axis=1)

    def expanded(self, width: float, boundary_mode: str = "free") -> "Window":
        return Window(tuple(v - width for v in self.lower), tuple(v + width for v in self.upper), boundary_mode)

    def scaled(self, factor: float) -> "Window":
        return Window(tuple(v * factor for v in self.lower), tuple(v * factor for v in self.upper),
                      self.boundary_mode)

    def displacement(self, a, b) -> np.ndarray:
        """``b - a``, using the minimum image on a torus."""
        disp = np.asarray(b, float) - np.asarray(a, float)
        if self.torus:
            disp = disp - self.sides * np.round(disp / self.sides)
        return disp

    def check_range(self, range_bound: float) -> None:
        if self.torus and np.any(self.sides < 2 * range_bound):
            raise ModelError(
                f"torus side {self.sides.min():g} is below twice the range bound {range_bound:g}")

    def to_dict(self) -> dict:
        return {"lower": list(self.lower), "upper": list(self.upper), "boundary_mode": self.boundary_mode}


@dataclass(frozen=True)
class MarkDistribution:
    """Mark law Q: a point mass, a finite discrete law, or a continuous law on an interval.

    Continuous laws are named scipy.stats distributions truncated to ``[low, high]``.
    """

    kind: str
    values: tuple = ()
    weights: tuple = ()
    dist: str = ""
    dist_params: tuple = ()
    low: float = 0.0
    high: float = 1.0

    def __post_init__(self):
        if self.kind == "point-mass":
            if len(self.values) != 1:
                raise ModelError("point-mass needs exactly one value")
        elif self.kind == "discrete":
            w = np.asarray(self.weights, float)
            if len(self.values) != len(w) or len(w) == 0:
                raise ModelError("discrete marks need matching values and weights")
            if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
                raise ModelError("discrete mark weights must be positive and sum to 1")
        elif self.kind == "continuous":
            if not self.high > self.low:
                raise ModelError("continuous marks need high > low")
            mass = self._frozen().cdf(self.high) - self._frozen().cdf(self.low)
            if not mass > 0:
                raise ModelError("continuous mark law puts no mass on [low, high]")
        else:
            raise ModelError(f"unknown mark kind {self.kind!r}")

    @classmethod
    def point_mass(cls, value=0.0) -> "MarkDistribution":
        return cls("point-mass", values=(value,), weights=(1.0,))

    @classmethod
    def discrete(cls, values: Sequence, weights: Sequence[float]) -> "MarkDistribution":
        return cls("discrete", values=tuple(values), weights=tuple(float(w) for w in weights))

    @classmethod
    def continuous(cls, dist: str = "uniform", params: Sequence[float] = (0.0, 1.0),
                   low: float = 0.0, high: float = 1.0) -> "MarkDistribution":
        return cls("continuous", dist=dist, dist_params=tuple(params), low=float(low), high=float(high))

    @classmethod
    def uniform(cls, low: float = 0.0, high: float = 1.0) -> "MarkDistribution":
        return cls.continuous("uniform", (low, high - low), low, high)

    def _frozen(self):
        return getattr(stats, self.dist)(*self.dist_params)

    @property
    def is_atomic(self) -> bool:
        return self.kind != "continuous"

    @property
    def support_max(self) -> float:
        if self.kind == "continuous":
            return float(self.high)
        return float(np.max(np.asarray(self.values, float)))

    def ppf(self, u):
        fr = self._frozen()
        a, b = fr.cdf(self.low), fr.cdf(self.high)
        return fr.ppf(a + np.asarray(u) * (b - a))

    def sample(self, gen: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "point-mass":
            return np.full(n, self.values[0], dtype=float)
        if self.kind == "discrete":
            idx = gen.choice(len(self.values), size=n, p=np.asarray(self.weights))
            return np.asarray(self.values, float)[idx]
        return self.ppf(gen.random(n))

    def quadrature(self, order: int = 32) -> tuple[np.ndarray, np.ndarray]:
        """Nodes and weights with ``sum w g(node) ~ int g dQ``; exact for atomic laws."""
        if self.kind != "continuous":
            return np.asarray(self.values, float), np.asarray(self.weights, float)
        x, w = np.polynomial.legendre.leggauss(order)
        return self.ppf((x + 1) / 2), w / 2

    def to_dict(self) -> dict:
        if self.kind == "continuous":
            return {"kind": self.kind, "dist": self.dist, "params": list(self.dist_params),
                    "low": self.low, "high": self.high}
        return {"kind": self.kind, "values": list(self.values), "weights": list(self.weights)}


@dataclass(frozen=True)
class PointConfiguration:
    window: Window
    locations: np.ndarray
    marks: np.ndarray
    ids: np.ndarray
    intensity: float

    def __len__(self) -> int:
        return len(self.ids)

    def subset(self, mask, intensity: float | None = None) -> "PointConfiguration":
        mask = np.asarray(mask)
        return PointConfiguration(self.window, self.locations[mask], self.marks[mask], self.ids[mask],
                                  self.intensity if intensity is None else intensity)

    def join(self, other: "PointConfiguration", window: Window | None = None) -> "PointConfiguration":
        return PointConfiguration(window or self.window,
                                  np.concatenate([self.locations, other.locations]),
                                  np.concatenate([self.marks, other.marks]),
                                  np.concatenate([self.ids, other.ids]), self.intensity)

    @classmethod
    def from_points(cls, window: Window, locations, marks=None, intensity: float = 0.0,
                    ids=None) -> "PointConfiguration":
        loc = np.asarray(locations, float).reshape(-1, window.dim)
        n = len(loc)
        m = np.zeros(n) if marks is None else np.asarray(marks, float)
        i = np.arange(n, dtype=np.int64) if ids is None else np.asarray(ids, np.int64)
        if len(np.unique(i)) != n:
            raise ModelError("point ids must be unique")
        return cls(window, loc, m, i, float(intensity))


# ---------------------------------------------------------------------------
# connection functions


@dataclass(frozen=True)
class ConnectionModel:
    """Base class for a translation-invariant marked connection function.

    ``phi(disp, p, q)`` is vectorised over rows of ``disp`` and returns edge
    probabilities.  ``range_bound`` is ``inf`` for unbounded models, which then
    need a radial envelope (``envelope`` / ``sample_envelope``).
    """

    dim: int
    marks: MarkDistribution
    tag: ClassVar[str] = ""

    # -- to override ---------------------------------------------------
    def phi(self, disp, p, q) -> np.ndarray:
        raise NotImplementedError

    @property
    def range_bound(self) -> float:
        return math.inf

    @property
    def has_envelope(self) -> bool:
        return math.isfinite(self.range_bound)

    @property
    def envelope_height(self) -> float:
        return 1.0

    def envelope(self, r) -> np.ndarray:
        r = np.asarray(r, float)
        return np.where(r <= self.range_bound, self.envelope_height, 0.0)

    @property
    def envelope_mass(self) -> float:
        return self.envelope_height * float(ball_volume(self.range_bound, self.dim))

    def sample_envelope(self, gen: np.random.Generator, k: int) -> np.ndarray:
        """``k`` displacements with density proportional to the envelope."""
        if not math.isfinite(self.range_bound):
            raise ModelError(f"{self.tag} has no radial envelope")
        return _uniform_ball(gen, k, self.dim, self.range_bound)

    def hard_radius(self, p, q):
        """Connection radius when phi is the indicator of a ball, else None."""
        return None

    def radial(self, s, p, q):
        raise ModelError(f"{self.tag} has no radial monotone profile")

    def radial_inverse(self, z, p, q):
        raise ModelError(f"{self.tag} has no radial monotone profile")

    @property
    def is_radial_monotone(self) -> bool:
        return False

    def pair_integral(self, p, q) -> np.ndarray:
        """d_phi(p, q) = int phi(x, p, q) dx, vectorised over p, q."""
        p, q = np.broadcast_arrays(np.asarray(p, float), np.asarray(q, float))
        out = np.empty(p.shape)
        for idx in np.ndindex(p.shape):
            out[idx] = self._numeric_pair_integral(float(p[idx]), float(q[idx]))
        return out

    # -- derived -------------------------------------------------------
    def _numeric_pair_integral(self, p: float, q: float) -> float:
        d = self.dim
        surface = d * unit_ball_volume(d)
        unit = np.zeros((1, d))
        unit[0, 0] = 1.0

        def f(r):
            return float(self.phi(unit * r, np.array([p]), np.array([q]))[0]) * surface * r ** (d - 1)

        upper = self.range_bound if math.isfinite(self.range_bound) else np.inf
        val, err = integrate.quad(f, 0.0, upper, epsabs=0.0, epsrel=1e-9, limit=200)
        if not (err <= 1e-6 * max(abs(val), 1e-300)):
            raise QuadratureError(f"pair integral of {self.tag} did not converge (err={err:g})")
        return val

    def degree_integral(self, p) -> np.ndarray:
        """D_phi(p) = int int phi(x, p, q) dx Q(dq) (per unit intensity)."""
        nodes, w = self.marks.quadrature()
        p = np.asarray(p, float)
        vals = self.pair_integral(p[..., None], nodes)
        return vals @ w

    @cached_property
    def d_phi(self) -> float:
        nodes, w = self.marks.quadrature()
        return float(w @ self.degree_integral(nodes))

    def validate(self) -> list[str]:
        problems = []
        if not math.isfinite(self.range_bound) and not self.has_envelope:
            problems.append(f"model {self.tag} has unbounded range and no radial envelope")
        return problems

    def params(self) -> dict:
        return {}

    def to_dict(self) -> dict:
        return {"name": self.tag, "dim": self.dim, "params": self.params(), "marks": self.marks.to_dict()}


def _uniform_ball(gen, k, d, radius):
    v = gen.standard_normal((k, d))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return v * (radius * gen.random(k) ** (1.0 / d))[:, None]


def _norm(disp):
    disp = np.asarray(disp, float)
    return np.sqrt(np.einsum("ij,ij->i", disp, disp))


@dataclass(frozen=True)
class GilbertModel(ConnectionModel):
    """phi(x, p, q) = 1{|x| <= p + q}; marks are radii."""

    tag = "gilbert"

    def __post_init__(self):
        if self.marks.kind != "continuous" and np.any(np.asarray(self.marks.values, float) < 0):
            raise ModelError("gilbert radii must be nonnegative")

    def phi(self, disp, p, q):
        return (_norm(disp) <= np.asarray(p) + np.asarray(q)).astype(float)

    @property
    def range_bound(self) -> float:
        return 2 * self.marks.support_max

    def hard_radius(self, p, q):
        return np.asarray(p, float) + np.asarray(q, float)

    @property
    def is_radial_monotone(self) -> bool:
        return True

    def radial(self, s, p, q):
        return (np.asarray(s) <= np.asarray(p) + np.asarray(q)).astype(float)

    def radial_inverse(self, z, p, q):
        return np.where(np.asarray(z) < 1.0, np.asarray(p, float) + np.asarray(q, float), 0.0)

    def pair_integral(self, p, q):
        return ball_volume(np.asarray(p, float) + np.asarray(q, float), self.dim)

    def params(self):
        if self.marks.kind == "point-mass":
            return {"radius": self.marks.values[0]}
        return {}


@dataclass(frozen=True)
class BooleanModel(ConnectionModel):
    """Ball grains with radius = mark; phi = 1 - exp(-c vol(B(0,p) & B(x,q)))."""

    c: float = 1.0
    tag = "boolean"

    def __post_init__(self):
        if not self.c > 0:
            raise ModelError("boolean model needs c > 0")

    def phi(self, disp, p, q):
        return -np.expm1(-self.c * lens_volume(_norm(disp), p, q, self.dim))

    @property
    def range_bound(self) -> float:
        return 2 * self.marks.support_max

    @property
    def envelope_height(self) -> float:
        rmax = self.marks.support_max
        return float(-np.expm1(-self.c * ball_volume(rmax, self.dim)))

    @property
    def is_radial_monotone(self) -> bool:
        return True

    def radial(self, s, p, q):
        return -np.expm1(-self.c * lens_volume(s, p, q, self.dim))

    def radial_inverse(self, z, p, q):
        z, p, q = np.broadcast_arrays(np.asarray(z, float), np.asarray(p, float), np.asarray(q, float))
        lo = np.zeros(z.shape)
        hi = p + q
        at_zero = self.radial(np.zeros(z.shape), p, q)
        for _ in range(60):
            mid = (lo + hi) / 2
            above = self.radial(mid, p, q) > z
            lo = np.where(above, mid, lo)
            hi = np.where(above, hi, mid)
        return np.where(at_zero <= z, 0.0, hi)

    def pair_integral(self, p, q):
        # radial integral split where the lens changes form: nested up to |p-q|, partial up to p+q
        p, q = np.broadcast_arrays(np.asarray(p, float), np.asarray(q, float))
        x, w = np.polynomial.legendre.leggauss(96)
        d = self.dim
        surface = d * unit_ball_volume(d)
        out = np.zeros(p.shape)
        for lo, hi in ((np.zeros(p.shape), np.abs(p - q)), (np.abs(p - q), p + q)):
            half = (hi - lo)[..., None] / 2
            r = (lo + hi)[..., None] / 2 + half * x
            vals = self.radial(r, p[..., None], q[..., None]) * surface * r ** (d - 1)
            out += (vals * w).sum(axis=-1) * half[..., 0]
        return out

    def params(self):
        return {"c": self.c}


@dataclass(frozen=True)
class WeightedModel(ConnectionModel):
    """Weight-dependent RCM: phi = rho(g(p, q) |x|^d), g = ((a+p)(a+q))^gamma / beta.

    ``rho`` is ``"exp"`` (rho(s) = e^{-s}) or ``"indicator"`` (rho(s) = 1{s <= 1}).
    Both have int rho(|x|^d) dx equal to the unit ball volume.
    """

    beta: float = 1.0
    gamma: float = 0.5
    floor: float = 0.1
    rho: str = "exp"
    tag = "weighted"

    def __post_init__(self):
        if self.rho not in ("exp", "indicator"):
            raise ModelError("weighted rho must be 'exp' or 'indicator'")
        if self.beta <= 0 or self.gamma < 0 or self.floor < 0:
            raise ModelError("weighted model needs beta > 0, gamma >= 0, floor >= 0")
        if self.marks.kind == "continuous" and self.marks.low < 0:
            raise ModelError("weighted marks must be nonnegative")

    def g(self, p, q):
        return ((self.floor + np.asarray(p, float)) * (self.floor + np.asarray(q, float))) ** self.gamma / self.beta

    @property
    def _g_min(self) -> float:
        lo = self.marks.low if self.marks.kind == "continuous" else float(np.min(self.marks.values))
        return float(self.g(lo, lo))

    def _rho(self, s):
        return np.exp(-s) if self.rho == "exp" else (s <= 1.0).astype(float)

    def phi(self, disp, p, q):
        return self._rho(self.g(p, q) * _norm(disp) ** self.dim)

    @property
    def range_bound(self) -> float:
        if self.rho == "indicator" and self._g_min > 0:
            return self._g_min ** (-1.0 / self.dim)
        return math.inf

    @property
    def has_envelope(self) -> bool:
        return self._g_min > 0

    def envelope(self, r):
        s = self._g_min * np.asarray(r, float) ** self.dim
        return self._rho(s)

    @property
    def envelope_mass(self) -> float:
        return unit_ball_volume(self.dim) / self._g_min

    def sample_envelope(self, gen, k):
        if not self.has_envelope:
            raise ModelError("weighted model with zero floor has no integrable envelope")
        if self.rho == "indicator":
            return _uniform_ball(gen, k, self.dim, self.range_bound)
        u = gen.exponential(1.0 / self._g_min, size=k)
        v = gen.standard_normal((k, self.dim))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        return v * (u ** (1.0 / self.dim))[:, None]

    @property
    def is_radial_monotone(self) -> bool:
        return True

    def radial(self, s, p, q):
        return self._rho(self.g(p, q) * np.asarray(s, float) ** self.dim)

    def radial_inverse(self, z, p, q):
        z = np.asarray(z, float)
        g = self.g(p, q)
        if self.rho == "indicator":
            return np.where(z < 1.0, g ** (-1.0 / self.dim), 0.0)
        with np.errstate(divide="ignore"):
            return np.where(z < 1.0, (-np.log(np.maximum(z, 1e-300)) / g) ** (1.0 / self.dim), 0.0)

    def pair_integral(self, p, q):
        return unit_ball_volume(self.dim) / self.g(p, q)

    def params(self):
        return {"beta": self.beta, "gamma": self.gamma, "floor": self.floor, "rho": self.rho}


@dataclass(frozen=True)
class FactorizedModel(ConnectionModel):
    """phi(x, p, q) = psi(x) K(p, q) over discrete marks labelled 0..k-1.

    ``psi`` is ``"ball"`` (indicator of radius ``scale``) or ``"gauss"``
    (``amplitude * exp(-|x|^2 / (2 scale^2))``).
    """

    kernel: tuple = ((1.0,),)
    psi: str = "ball"
    scale: float = 1.0
    amplitude: float = 1.0
    tag = "factorized"

    def __post_init__(self):
        K = np.asarray(self.kernel, float)
        if K.ndim != 2 or K.shape[0] != K.shape[1]:
            raise ModelError("factorized kernel must be square")
        if not np.allclose(K, K.T, atol=0, rtol=0):
            raise ModelError("factorized kernel must be symmetric")
        if np.any(K < 0) or np.any(K > 1):
            raise ModelError("factorized kernel entries must lie in [0, 1]")
        if self.psi not in ("ball", "gauss"):
            raise ModelError("psi must be 'ball' or 'gauss'")
        if not (0 < self.amplitude <= 1) or not self.scale > 0:
            raise ModelError("psi needs 0 < amplitude <= 1 and scale > 0")
        if self.marks.kind == "continuous":
            raise ModelError("factorized model needs discrete marks 0..k-1")
        vals = np.asarray(self.marks.values, float)
        if np.any(vals != np.round(vals)) or vals.min() < 0 or vals.max() >= K.shape[0]:
            raise ModelError("factorized marks must be integer labels indexing the kernel")

    @property
    def K(self) -> np.ndarray:
        return np.asarray(self.kernel, float)

    def _psi(self, r):
        if self.psi == "ball":
            return self.amplitude * (r <= self.scale)
        return self.amplitude * np.exp(-0.5 * (r / self.scale) ** 2)

    def phi(self, disp, p, q):
        k = self.K[np.asarray(p).astype(int), np.asarray(q).astype(int)]
        return self._psi(_norm(disp)) * k

    @property
    def range_bound(self) -> float:
        return self.scale if self.psi == "ball" else math.inf

    @property
    def has_envelope(self) -> bool:
        return True

    @property
    def envelope_height(self) -> float:
        return self.amplitude * float(self.K.max()) if self.K.max() > 0 else self.amplitude

    def envelope(self, r):
        return self.envelope_height / self.amplitude * self._psi(np.asarray(r, float))

    @property
    def m_psi(self) -> float:
        if self.psi == "ball":
            return self.amplitude * float(ball_volume(self.scale, self.dim))
        return self.amplitude * (2 * math.pi * self.scale**2) ** (self.dim / 2)

    @property
    def envelope_mass(self) -> float:
        return self.envelope_height / self.amplitude * self.m_psi

    def sample_envelope(self, gen, k):
        if self.psi == "ball":
            return _uniform_ball(gen, k, self.dim, self.scale)
        return gen.standard_normal((k, self.dim)) * self.scale

    def hard_radius(self, p, q):
        if self.psi == "ball" and self.amplitude == 1.0 and np.all(np.isin(self.K, (0.0, 1.0))):
            k = self.K[np.asarray(p).astype(int), np.asarray(q).astype(int)]
            return np.where(k > 0, self.scale, 0.0)
        return None

    def pair_integral(self, p, q):
        return self.m_psi * self.K[np.asarray(p).astype(int), np.asarray(q).astype(int)]

    def params(self):
        return {"kernel": [list(r) for r in self.kernel], "psi": self.psi, "scale": self.scale,
                "amplitude": self.amplitude}


@dataclass(frozen=True)
class TwoBlockModel(FactorizedModel):
    """Factorized model whose kernel is block diagonal."""

    tag = "two_block"


@dataclass(frozen=True)
class ConstantModel(ConnectionModel):
    """phi = c 1{|x| <= radius}; ``radius`` may be infinite (graph building only)."""

    c: float = 1.0
    radius: float = math.inf
    tag = "constant"

    def __post_init__(self):
        if not 0 <= self.c <= 1:
            raise ModelError("constant connection probability must lie in [0, 1]")

    def phi(self, disp, p, q):
        return np.where(_norm(disp) <= self.radius, self.c, 0.0)

    @property
    def range_bound(self) -> float:
        return 0.0 if self.c == 0 else self.radius

    @property
    def has_envelope(self) -> bool:
        return math.isfinite(self.range_bound)

    @property
    def envelope_height(self) -> float:
        return self.c if self.c > 0 else 1.0

    def sample_envelope(self, gen, k):
        if self.c == 0:
            return np.zeros((k, self.dim))
        return super().sample_envelope(gen, k)

    @property
    def envelope_mass(self) -> float:
        if self.c == 0:
            return 0.0
        return super().envelope_mass

    def hard_radius(self, p, q):
        if self.c == 1.0 and math.isfinite(self.radius):
            return np.broadcast_to(self.radius, np.broadcast(np.asarray(p), np.asarray(q)).shape).astype(float)
        if self.c == 0.0:
            return np.zeros(np.broadcast(np.asarray(p), np.asarray(q)).shape)
        return None

    def pair_integral(self, p, q):
        shape = np.broadcast(np.asarray(p), np.asarray(q)).shape
        if self.c == 0:
            return np.zeros(shape)
        if not math.isfinite(self.radius):
            raise QuadratureError("constant model with infinite radius is not integrable")
        return np.full(shape, self.c * float(ball_volume(self.radius, self.dim)))

    def params(self):
        return {"c": self.c, "radius": self.radius}


# ---------------------------------------------------------------------------
# catalog


def _marks_from_spec(spec: Any, default: MarkDistribution) -> MarkDistribution:
    if spec is None:
        return default
    if isinstance(spec, MarkDistribution):
        return spec
    kind = spec.get("kind", "point-mass")
    if kind == "point-mass":
        return MarkDistribution.point_mass(float(spec.get("value", 0.0)))
    if kind == "discrete":
        return MarkDistribution.discrete(spec["values"], spec["weights"])
    if kind == "uniform":
        return MarkDistribution.uniform(float(spec.get("low", 0.0)), float(spec.get("high", 1.0)))
    if kind == "continuous":
        return MarkDistribution.continuous(spec.get("dist", "uniform"), spec.get("params", (0.0, 1.0)),
                                           spec.get("low", 0.0), spec.get("high", 1.0))
    raise ModelError(f"unknown mark kind {kind!r}")


def make_model(name: str, params: dict | None = None, dim: int = 2) -> ConnectionModel:
    """Build a catalog model from its name and a parameter map."""
    params = dict(params or {})
    marks_spec = params.pop("marks", None)
    if name == "gilbert":
        radius = params.pop("radius", 0.5)
        model = GilbertModel(dim, _marks_from_spec(marks_spec, MarkDistribution.point_mass(float(radius))))
    elif name == "boolean":
        radius = params.pop("radius", 0.5)
        model = BooleanModel(dim, _marks_from_spec(marks_spec, MarkDistribution.point_mass(float(radius))),
                             c=float(params.pop("c", 1.0)))
    elif name == "weighted":
        model = WeightedModel(dim, _marks_from_spec(marks_spec, MarkDistribution.uniform(0.0, 1.0)),
                              beta=float(params.pop("beta", 1.0)), gamma=float(params.pop("gamma", 0.5)),
                              floor=float(params.pop("floor", 0.1)), rho=params.pop("rho", "exp"))
    elif name == "factorized":
        kernel = params.pop("kernel", [[1.0]])
        k = len(kernel)
        weights = params.pop("weights", [1.0 / k] * k)
        marks = _marks_from_spec(marks_spec, MarkDistribution.discrete(list(range(k)), weights)
                                 if k > 1 else MarkDistribution.point_mass(0.0))
        model = FactorizedModel(dim, marks, kernel=tuple(tuple(float(v) for v in r) for r in kernel),
                                psi=params.pop("psi", "ball"), scale=float(params.pop("scale", 1.0)),
                                amplitude=float(params.pop("amplitude", 1.0)))
    elif name == "two_block":
        sizes = params.pop("block_sizes", [1, 1])
        k_in = float(params.pop("k_in", 1.0))
        k = int(sum(sizes))
        labels = np.repeat(np.arange(len(sizes)), sizes)
        K = np.where(labels[:, None] == labels[None, :], k_in, 0.0)
        weights = params.pop("weights", [1.0 / k] * k)
        model = TwoBlockModel(dim, MarkDistribution.discrete(list(range(k)), weights),
                              kernel=tuple(tuple(r) for r in K.tolist()),
                              psi=params.pop("psi", "ball"), scale=float(params.pop("scale", 1.0)),
                              amplitude=float(params.pop("amplitude", 1.0)))
    elif name == "constant":
        model = ConstantModel(dim, _marks_from_spec(marks_spec, MarkDistribution.point_mass(0.0)),
                              c=float(params.pop("c", 1.0)), radius=float(params.pop("radius", math.inf)))
    else:
        raise ModelError(f"unknown model {name!r}; known: {', '.join(CATALOG)}")
    if params:
        raise ModelError(f"unknown parameters for {name}: {sorted(params)}")
    return model


CATALOG = ("gilbert", "boolean", "weighted", "factorized", "two_block", "constant")


# ---------------------------------------------------------------------------
# operations


def sample_poisson(window: Window, t: float, marks: MarkDistribution, rng,
                   max_expected: float = DEFAULT_MAX_EXPECTED_POINTS,
                   id_offset: int = 0) -> PointConfiguration:
    if not t >= 0:
        raise ModelError(f"intensity must be nonnegative, got {t}")
    mean = t * window.volume
    if mean > max_expected:
        raise ModelError(f"expected point count {mean:g} exceeds the cap {max_expected:g}")
    gen = as_generator(rng)
    n = int(gen.poisson(mean)) if mean > 0 else 0
    lo = np.asarray(window.lower)
    loc = lo + gen.random((n, window.dim)) * window.sides
    m = marks.sample(gen, n)
    return PointConfiguration(window, loc, m, np.arange(id_offset, id_offset + n, dtype=np.int64), float(t))


def thin(config: PointConfiguration, keep_prob: float, rng):
    """Independent Bernoulli(keep_prob) thinning; returns ``(kept, removed)``."""
    if not 0.0 <= keep_prob <= 1.0:
        raise ModelError(f"keep_prob must lie in [0, 1], got {keep_prob}")
    gen = as_generator(rng)
    keep = gen.random(len(config)) < keep_prob
    t = config.intensity
    return config.subset(keep, keep_prob * t), config.subset(~keep, (1 - keep_prob) * t)


def degree_integral(model: ConnectionModel, p) -> float | np.ndarray:
    val = model.degree_integral(np.asarray(p, float))
    return float(val) if np.ndim(val) == 0 else val


def model_d_phi(model: ConnectionModel, marks: MarkDistribution | None = None) -> float:
    if marks is None or marks == model.marks:
        return model.d_phi
    nodes, w = marks.quadrature()
    return float(w @ model.degree_integral(nodes))
