"""Random streams and counter-based pair uniforms."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


@dataclass(frozen=True)
class RngStream:
    """A reproducible stream identified by ``(seed, stream_id)``.

    Streams with different ids are derived through :class:`numpy.random.SeedSequence`
    and are statistically independent.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        if not (0 <= self.seed <= _MASK64 and 0 <= self.stream_id <= _MASK64):
            raise ValueError("seed and stream_id must be 64-bit unsigned integers")

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence([self.seed & 0xFFFFFFFF, self.seed >> 32,
                                     self.stream_id & 0xFFFFFFFF, self.stream_id >> 32])
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, index: int) -> "RngStream":
        mixed = int(_splitmix(np.array([self.stream_id], dtype=np.uint64) + np.uint64(index + 1))[0])
        return RngStream(self.seed, mixed)


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    if rng is None or isinstance(rng, (int, np.integer)):
        return np.random.default_rng(rng)
    raise TypeError(f"cannot build a generator from {type(rng).__name__}")


def _splitmix(x: np.ndarray) -> np.ndarray:
    z = x.astype(np.uint64, copy=True)
    with np.errstate(over="ignore"):
        z += _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def pair_uniforms(key: int, ids_a, ids_b) -> np.ndarray:
    """Uniforms in [0, 1) keyed by the unordered id pair.

    The same ``(key, {a, b})`` always yields the same value, which is what makes
    coupled graphs share their edge decisions.
    """
    a = np.asarray(ids_a, dtype=np.int64)
    b = np.asarray(ids_b, dtype=np.int64)
    lo = np.minimum(a, b).astype(np.uint64)
    hi = np.maximum(a, b).astype(np.uint64)
    k = np.uint64(key & _MASK64)
    with np.errstate(over="ignore"):
        h = _splitmix(_splitmix(lo ^ k) + hi)
    return (h >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


def draw_key(gen: np.random.Generator) -> int:
    return int(gen.integers(0, 2**63 - 1, dtype=np.int64))
