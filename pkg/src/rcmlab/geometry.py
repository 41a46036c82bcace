"""Geometric primitives: ball volumes, lens volumes, unions of balls, and
fixed-radius pair search on a uniform cell grid."""
from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.special import betainc, gamma

BRUTE_FORCE_BELOW = 96
MAX_CELLS_PER_AXIS = 64


def unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2) / gamma(d / 2 + 1)


def ball_volume(radius, d: int):
    return unit_ball_volume(d) * np.asarray(radius, dtype=float) ** d


def _cap_volume(rho, h, d):
    # cap of height h (0 <= h <= 2 rho) cut from a ball of radius rho
    rho = np.asarray(rho, dtype=float)
    h = np.clip(np.asarray(h, dtype=float), 0.0, 2 * rho)
    small = np.minimum(h, 2 * rho - h)
    with np.errstate(divide="ignore", invalid="ignore"):
        arg = np.where(rho > 0, (2 * rho * small - small**2) / np.where(rho > 0, rho, 1.0) ** 2, 0.0)
    half = 0.5 * unit_ball_volume(d) * rho**d * betainc((d + 1) / 2, 0.5, np.clip(arg, 0.0, 1.0))
    return np.where(h <= rho, half, unit_ball_volume(d) * rho**d - half)


def lens_volume(r, a, b, d: int):
    """Volume of the intersection of balls of radii ``a`` and ``b`` whose centres are ``r`` apart."""
    r, a, b = np.broadcast_arrays(np.asarray(r, float), np.asarray(a, float), np.asarray(b, float))
    out = np.zeros(r.shape)
    disjoint = r >= a + b
    nested = r <= np.abs(a - b)
    out[nested] = ball_volume(np.minimum(a, b)[nested], d)
    part = ~(disjoint | nested)
    if np.any(part):
        rr, aa, bb = r[part], a[part], b[part]
        da = (rr**2 + aa**2 - bb**2) / (2 * rr)
        out[part] = _cap_volume(aa, aa - da, d) + _cap_volume(bb, bb - (rr - da), d)
    return out


def union_length_1d(centers, radii) -> float:
    c = np.asarray(centers, float).ravel()
    r = np.broadcast_to(np.asarray(radii, float), c.shape)
    keep = r > 0
    if not np.any(keep):
        return 0.0
    lo, hi = c[keep] - r[keep], c[keep] + r[keep]
    order = np.argsort(lo)
    lo, hi = lo[order], hi[order]
    total, cur_lo, cur_hi = 0.0, lo[0], hi[0]
    for a, b in zip(lo[1:], hi[1:]):
        if a > cur_hi:
            total += cur_hi - cur_lo
            cur_lo, cur_hi = a, b
        elif b > cur_hi:
            cur_hi = b
    return total + cur_hi - cur_lo


def union_area_2d(centers, radii) -> float:
    """Exact area of a union of discs via Green's theorem on the uncovered boundary arcs."""
    c = np.asarray(centers, float).reshape(-1, 2)
    r = np.broadcast_to(np.asarray(radii, float), (len(c),)).copy()
    keep = r > 0
    c, r = c[keep], r[keep]
    n = len(c)
    if n == 0:
        return 0.0
    if n == 1:
        return math.pi * r[0] ** 2
    diff = c[None, :, :] - c[:, None, :]
    dist = np.hypot(diff[..., 0], diff[..., 1])
    idx = np.arange(n)
    ri, rj = r[:, None], r[None, :]
    # disc i lies inside disc j (ties between identical discs go to the lower index)
    inside = (dist + ri <= rj) & ((dist + ri < rj) | (idx[None, :] < idx[:, None]))
    np.fill_diagonal(inside, False)
    hidden = inside.any(axis=1)
    cross = (dist < ri + rj) & (dist > np.abs(ri - rj)) & ~hidden[:, None] & ~hidden[None, :]
    np.fill_diagonal(cross, False)
    pi_, pj = np.nonzero(cross)
    dd = dist[pi_, pj]
    alpha = np.arctan2(diff[pi_, pj, 1], diff[pi_, pj, 0])
    beta = np.arccos(np.clip((r[pi_] ** 2 + dd**2 - r[pj] ** 2) / (2 * r[pi_] * dd), -1.0, 1.0))
    two_pi = 2 * math.pi
    start = np.mod(alpha - beta, two_pi)
    end = start + 2 * beta
    bounds = np.searchsorted(pi_, np.arange(n + 1))
    start_l, end_l, bounds = start.tolist(), end.tolist(), bounds.tolist()
    total = 0.0
    for i in range(n):
        if hidden[i]:
            continue
        a, b = bounds[i], bounds[i + 1]
        arcs = _uncovered_arcs(start_l[a:b], end_l[a:b]) if b > a else [(0.0, two_pi)]
        cx, cy, rr = float(c[i, 0]), float(c[i, 1]), float(r[i])
        for t1, t2 in arcs:
            total += 0.5 * (rr * rr * (t2 - t1)
                            + rr * cx * (math.sin(t2) - math.sin(t1))
                            - rr * cy * (math.cos(t2) - math.cos(t1)))
    return total


def _uncovered_arcs(start, end):
    # complement in [0, 2pi) of a union of arcs given as [start, end] with start in [0, 2pi)
    two_pi = 2 * math.pi
    segs = []
    for s, e in zip(start, end):
        if e - s >= two_pi:
            return []
        if e > two_pi:
            segs.append((s, two_pi))
            segs.append((0.0, e - two_pi))
        else:
            segs.append((s, e))
    segs.sort()
    out, pos = [], 0.0
    for s, e in segs:
        if s > pos:
            out.append((pos, s))
        pos = max(pos, e)
    if pos < two_pi:
        out.append((pos, two_pi))
    return out


def wrap_displacement(disp: np.ndarray, sides: np.ndarray | None) -> np.ndarray:
    if sides is None:
        return disp
    return disp - sides * np.round(disp / sides)


def candidate_pairs(points: np.ndarray, radius: float, *, lower=None, sides=None,
                    torus: bool = False):
    """All unordered pairs ``i < j`` with (wrapped) distance at most ``radius``.

    Returns ``(i, j, disp)`` where ``disp = x_j - x_i`` (minimum image on a torus).
    Uses a uniform cell grid with cell side at least ``radius``; falls back to all
    pairs for small inputs or infinite radius.
    """
    pts = np.asarray(points, float)
    n, d = pts.shape if pts.ndim == 2 else (0, 1)
    empty = (np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros((0, max(d, 1))))
    if n < 2:
        return empty
    wrap_sides = np.asarray(sides, float) if torus else None
    if not math.isfinite(radius) or n < BRUTE_FORCE_BELOW:
        return _brute_pairs(pts, radius, wrap_sides)
    if lower is None:
        lower = pts.min(axis=0)
        span = pts.max(axis=0) - lower
    else:
        lower = np.asarray(lower, float)
        span = np.asarray(sides, float) if sides is not None else pts.max(axis=0) - lower
    span = np.maximum(span, 1e-12)
    cell = np.maximum(radius, span / MAX_CELLS_PER_AXIS)
    ncell = np.maximum(np.floor(span / cell).astype(np.int64), 1)
    if torus and np.any(ncell < 3):
        return _brute_pairs(pts, radius, wrap_sides)
    cell = span / ncell
    coords = np.minimum(np.floor((pts - lower) / cell).astype(np.int64), ncell - 1)
    coords = np.maximum(coords, 0)
    strides = np.concatenate([[1], np.cumprod(ncell[:-1])]).astype(np.int64)
    lin = coords @ strides
    order = np.argsort(lin, kind="stable")
    counts = np.bincount(lin, minlength=int(np.prod(ncell)))
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    ii, jj = [], []
    for off in itertools.product((-1, 0, 1), repeat=d):
        nb = coords + np.asarray(off, dtype=np.int64)
        if torus:
            nb %= ncell
            valid = np.ones(n, bool)
        else:
            valid = np.all((nb >= 0) & (nb < ncell), axis=1)
        q = np.nonzero(valid)[0]
        nl = nb[q] @ strides
        cnt = counts[nl]
        tot = int(cnt.sum())
        if tot == 0:
            continue
        qi = np.repeat(q, cnt)
        first = np.repeat(starts[nl] - np.concatenate([[0], np.cumsum(cnt)[:-1]]), cnt)
        qj = order[first + np.arange(tot)]
        keep = qi < qj
        ii.append(qi[keep])
        jj.append(qj[keep])
    if not ii:
        return empty
    i = np.concatenate(ii)
    j = np.concatenate(jj)
    disp = wrap_displacement(pts[j] - pts[i], wrap_sides)
    ok = np.einsum("ij,ij->i", disp, disp) <= radius * radius
    i, j, disp = i[ok], j[ok], disp[ok]
    srt = np.lexsort((j, i))
    return i[srt], j[srt], disp[srt]


def _brute_pairs(pts, radius, wrap_sides):
    n = len(pts)
    i, j = np.triu_indices(n, k=1)
    disp = wrap_displacement(pts[j] - pts[i], wrap_sides)
    if math.isfinite(radius):
        ok = np.einsum("ij,ij->i", disp, disp) <= radius * radius
        i, j, disp = i[ok], j[ok], disp[ok]
    return i.astype(np.int64), j.astype(np.int64), disp


def cross_pairs(a: np.ndarray, b: np.ndarray, radius: float):
    """Pairs (k, l) with ``|b_l - a_k| <= radius``; returns ``(k, l, b_l - a_k)``."""
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    if len(a) == 0 or len(b) == 0:
        return np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros((0, a.shape[1] if a.ndim == 2 else 1))
    if math.isfinite(radius) and len(a) * len(b) > 40_000:
        from scipy.spatial import cKDTree

        tree = cKDTree(b)
        hits = tree.query_ball_point(a, radius)
        cnt = np.fromiter((len(h) for h in hits), np.int64, len(a))
        k = np.repeat(np.arange(len(a)), cnt)
        l = np.fromiter(itertools.chain.from_iterable(hits), np.int64, int(cnt.sum()))
        return k, l, b[l] - a[k]
    disp = b[None, :, :] - a[:, None, :]
    if not math.isfinite(radius):
        k = np.repeat(np.arange(len(a)), len(b))
        l = np.tile(np.arange(len(b)), len(a))
        return k, l, disp.reshape(-1, a.shape[1])
    k, l = np.nonzero(np.einsum("ijk,ijk->ij", disp, disp) <= radius * radius)
    return k, l, disp[k, l]
