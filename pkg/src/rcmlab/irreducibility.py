"""Irreducibility of a marked connection function on a discretised mark space.

On a finite grid, the iterated kernel is positive between two marks exactly
when they are joined by a path in the support graph of the mark-pair integral
matrix, so the decision reduces to graph connectivity plus positive rows.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order, connected_components

from .model import ConnectionModel, MarkDistribution


@dataclass(frozen=True)
class MarkGrid:
    marks: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.marks, float).ravel()
        w = np.asarray(self.weights, float).ravel()
        if len(m) != len(w) or len(m) == 0:
            raise ValueError("mark grid needs matching nonempty marks and weights")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("grid weights must be positive and sum to 1")
        object.__setattr__(self, "marks", m)
        object.__setattr__(self, "weights", w)

    def __len__(self):
        return len(self.marks)

    @classmethod
    def from_distribution(cls, marks: MarkDistribution, size: int = 32) -> "MarkGrid":
        """Atoms of a discrete law; equal-mass quantile midpoints of a continuous one."""
        if marks.is_atomic:
            return cls(np.asarray(marks.values, float), np.asarray(marks.weights, float))
        u = (np.arange(size) + 0.5) / size
        return cls(marks.ppf(u), np.full(size, 1.0 / size))


@dataclass(frozen=True)
class KernelMatrix:
    matrix: np.ndarray
    grid: MarkGrid

    def __post_init__(self):
        D = np.asarray(self.matrix, float)
        if D.shape != (len(self.grid), len(self.grid)):
            raise ValueError("kernel matrix shape does not match the grid")
        if np.any(D < 0) or not np.all(np.isfinite(D)):
            raise ValueError("kernel entries must be finite and nonnegative")
        scale = max(float(D.max()), 1e-300)
        if np.max(np.abs(D - D.T)) > 1e-12 * scale:
            raise ValueError("kernel matrix is not symmetric")
        object.__setattr__(self, "matrix", D)

    def compose(self, other: "KernelMatrix") -> "KernelMatrix":
        """(D1 o D2)(p, q) = sum_r D1(p, r) w_r D2(r, q)."""
        M = self.matrix @ (self.grid.weights[:, None] * other.matrix)
        return KernelMatrix((M + M.T) / 2, self.grid)

    def power(self, n: int) -> "KernelMatrix":
        out = self
        for _ in range(n - 1):
            out = out.compose(self)
        return out


def build_kernel_matrix(model: ConnectionModel, grid: MarkGrid) -> KernelMatrix:
    m = grid.marks
    iu, ju = np.triu_indices(len(m))
    vals = np.asarray(model.pair_integral(m[iu], m[ju]), float)
    D = np.zeros((len(m), len(m)))
    D[iu, ju] = vals
    D[ju, iu] = vals
    return KernelMatrix(D, grid)


@dataclass
class IrreducibilityReport:
    verdict: str
    blocks: list[list[int]]
    rows_positive: bool
    connected: bool
    tolerance: float
    straddling: int
    power_positive_at: int | None
    conditions: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "blocks": self.blocks, "rows_positive": self.rows_positive,
                "connected": self.connected, "tolerance": self.tolerance, "straddling_entries": self.straddling,
                "power_positive_at": self.power_positive_at, "conditions": self.conditions}


def _tolerance(D, positivity_tol):
    if positivity_tol is not None:
        return float(positivity_tol)
    return 1e-12 * float(D.max()) if D.size else 0.0


def check_irreducible(kernel: KernelMatrix, positivity_tol: float | None = None,
                      atoms=None) -> IrreducibilityReport:
    D = kernel.matrix
    k = len(D)
    tol = _tolerance(D, positivity_tol)
    support = D > tol
    straddling = int(np.sum((D > tol) & (D < 10 * tol))) if tol > 0 else 0
    n_comp, labels = connected_components(csr_matrix(support), directed=False)
    blocks = [np.nonzero(labels == c)[0].tolist() for c in range(n_comp)]
    blocks.sort(key=lambda b: b[0])
    rows_positive = bool(np.all(support.any(axis=1)))
    connected = n_comp == 1
    if straddling:
        verdict = "undetermined"
    elif connected and rows_positive:
        verdict = "irreducible"
    else:
        verdict = "reducible"
    conditions = check_minimal_conditions(kernel, atoms=atoms, positivity_tol=tol)
    return IrreducibilityReport(verdict, blocks, rows_positive, connected, tol, straddling,
                                _power_positive_at(kernel, tol), conditions)


def _power_positive_at(kernel: KernelMatrix, tol: float) -> int | None:
    """Smallest n <= 2k with sum_{m<=n} D^(m) entrywise positive (diagnostic only)."""
    D = kernel.matrix
    k = len(D)
    if D.max() <= tol:
        return None
    w = kernel.grid.weights
    unit = D / D.max()
    power = unit.copy()
    acc = power > 0
    for n in range(1, 2 * k + 1):
        if np.all(acc):
            return n
        power = power @ (w[:, None] * unit)
        top = power.max()
        if top <= 0:
            return None
        power = power / top
        acc |= power > 1e-300
    return None


def check_minimal_conditions(kernel: KernelMatrix, atoms=None, positivity_tol: float | None = None) -> dict:
    """Row positivity, reachability from declared atoms, and the monotone-row shortcut."""
    D = kernel.matrix
    w = kernel.grid.weights
    tol = _tolerance(D, positivity_tol)
    support = D > tol
    row_mass = D @ w
    row_ok = support.any(axis=1)
    out = {
        "row_mass": row_mass.tolist(),
        "rows_positive": bool(row_ok.all()),
        "isolated": np.nonzero(~row_ok)[0].tolist(),
    }
    if atoms is not None:
        graph = csr_matrix(support)
        reach = {}
        for a in atoms:
            seen = breadth_first_order(graph, int(a), directed=False, return_predecessors=False)
            # the atom itself is reached at step >= 1 only if it has an edge
            hit = np.zeros(len(D), bool)
            hit[seen] = True
            if not row_ok[a]:
                hit[a] = False
            reach[int(a)] = bool(hit.all())
        out["atom_reaches_all"] = reach
    marks = kernel.grid.marks
    ordered = bool(np.all(np.diff(marks) > 0))
    diffs = np.diff(D, axis=1)
    nondec = bool(np.all(diffs >= -1e-12 * max(D.max(), 1e-300)))
    noninc = bool(np.all(diffs <= 1e-12 * max(D.max(), 1e-300)))
    applies = ordered and len(D) > 1 and (nondec or noninc)
    out["monotone_shortcut_applies"] = applies
    if applies:
        out["monotone_shortcut_verdict"] = "irreducible" if out["rows_positive"] else "reducible"
    return out
