"""Sparse nonnegative edge matrices and their spectral radius.

The estimator runs power iteration on ``A + eps*I``.  For a nonnegative
matrix the shift moves the Perron root by exactly ``eps`` and turns every
irreducible block primitive, so the iteration cannot oscillate on periodic
structures such as a single cycle.  Each strongly connected block is
iterated separately: blocks without a cycle contribute exactly 0, which
makes the tree (nilpotent) case exact instead of slowly converging.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from . import kernels

__all__ = [
    "DEFAULT_SHIFT",
    "DEFAULT_TOL",
    "DEFAULT_MAX_ITERS",
    "EdgeMatrix",
    "SpectralEstimate",
    "matvec",
    "spectral_condition",
    "spectral_radius",
]

DEFAULT_SHIFT = 1e-3
DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITERS = 50000


class EdgeMatrix:
    """Square nonnegative sparse matrix indexed by directed edges (CSR).

    Entries are sorted by (row, column); duplicates are rejected.
    """

    __slots__ = ("dim", "indptr", "indices", "data")

    def __init__(self, dim: int, rows, cols, values):
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        values = np.asarray(values, dtype=np.float64)
        if not (rows.shape == cols.shape == values.shape):
            raise ValueError("rows, cols and values must have equal length")
        if values.size:
            if rows.min() < 0 or cols.min() < 0 or rows.max() >= dim or cols.max() >= dim:
                raise ValueError("entry index out of range")
            if not np.all(np.isfinite(values)) or values.min() < 0:
                raise ValueError("edge matrix entries must be finite and nonnegative")
        order = np.lexsort((cols, rows))
        rows, cols, values = rows[order], cols[order], values[order]
        if rows.size > 1 and np.any((np.diff(rows) == 0) & (np.diff(cols) == 0)):
            raise ValueError("duplicate (row, col) entry")
        self.dim = int(dim)
        self.indptr = np.zeros(dim + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=dim), out=self.indptr[1:])
        self.indices = np.ascontiguousarray(cols)
        self.data = np.ascontiguousarray(values)

    @classmethod
    def from_dense(cls, a) -> "EdgeMatrix":
        a = np.asarray(a, dtype=np.float64)
        r, c = np.nonzero(a)
        return cls(a.shape[0], r, c, a[r, c])

    @property
    def nnz(self) -> int:
        return len(self.data)

    def entries(self) -> list[tuple[int, int, float]]:
        rows = np.repeat(np.arange(self.dim), np.diff(self.indptr))
        return list(zip(rows.tolist(), self.indices.tolist(), self.data.tolist()))

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.dim, self.dim))
        for r, c, v in self.entries():
            out[r, c] = v
        return out

    def to_scipy(self) -> csr_matrix:
        return csr_matrix((self.data, self.indices, self.indptr), shape=(self.dim, self.dim))

    def column_sums(self) -> np.ndarray:
        return np.bincount(self.indices, weights=self.data, minlength=self.dim)

    def scaled(self, c: float) -> "EdgeMatrix":
        rows = np.repeat(np.arange(self.dim), np.diff(self.indptr))
        return EdgeMatrix(self.dim, rows, self.indices, self.data * c)

    def submatrix(self, idx: np.ndarray) -> "EdgeMatrix":
        """Principal submatrix on the (sorted) index set ``idx``."""
        idx = np.asarray(idx, dtype=np.int64)
        pos = np.full(self.dim, -1, dtype=np.int64)
        pos[idx] = np.arange(len(idx))
        rows = np.repeat(np.arange(self.dim), np.diff(self.indptr))
        keep = (pos[rows] >= 0) & (pos[self.indices] >= 0)
        return EdgeMatrix(len(idx), pos[rows[keep]], pos[self.indices[keep]], self.data[keep])

    def __repr__(self):
        return f"EdgeMatrix(dim={self.dim}, nnz={self.nnz})"


def matvec(A: EdgeMatrix, v) -> np.ndarray:
    """Exact sparse product ``A @ v``; each row accumulates in column order."""
    v = np.ascontiguousarray(v, dtype=np.float64)
    if v.shape != (A.dim,):
        raise ValueError(f"vector length {v.shape} does not match dimension {A.dim}")
    return kernels.active.csr_matvec(A.indptr, A.indices, A.data, v)


@dataclass(frozen=True)
class SpectralEstimate:
    """Power-iteration result.

    ``upper_bound`` is the Collatz-Wielandt bound ``max_i (Ax)_i / x_i`` of
    the final iterate; it is a guaranteed upper bound on the spectral radius
    even when the iteration did not converge.
    """

    rho: float
    iterations: int
    converged: bool
    residual: float
    upper_bound: float = 0.0
    vector: np.ndarray | None = field(default=None, repr=False, compare=False)


def _power_block(A: EdgeMatrix, shift: float, tol: float, max_iters: int):
    n = A.dim
    x = np.full(n, 1.0 / n)
    est = lo = hi = 0.0
    gap = float("inf")
    for it in range(1, max_iters + 1):
        y = matvec(A, x) + shift * x
        ratios = y / x
        lo, hi = float(ratios.min()), float(ratios.max())
        est = float(y.sum())  # x sums to 1, so this is the l1 growth factor
        x = y / est
        gap = (hi - lo) / est
        if gap <= tol:
            return est, lo, hi, it, True, gap, x
    return est, lo, hi, max_iters, False, gap, x


def spectral_radius(
    A: EdgeMatrix,
    tol: float = DEFAULT_TOL,
    max_iters: int = DEFAULT_MAX_ITERS,
    shift: float = DEFAULT_SHIFT,
) -> SpectralEstimate:
    """Estimate the spectral radius of a nonnegative edge matrix.

    Iterates ``A + shift*I`` from the all-ones vector with l1 normalisation on
    every strongly connected block that contains a cycle.  A block stops once
    the Collatz-Wielandt bracket ``[min_i (Bx)_i/x_i, max_i (Bx)_i/x_i]``,
    which always contains the block's Perron root, is narrower than ``tol``
    relative to the estimate.
    """
    if not tol > 0:
        raise ValueError("tol must be > 0")
    if A.nnz and A.data.min() < 0:
        raise ValueError("spectral_radius requires a nonnegative matrix")
    if A.dim == 0 or A.nnz == 0:
        return SpectralEstimate(0.0, 0, True, 0.0, 0.0, np.zeros(A.dim))
    S = A.to_scipy()
    ncomp, labels = connected_components(S, directed=True, connection="strong")
    rows = np.repeat(np.arange(A.dim), np.diff(A.indptr))
    # a block has a cycle iff it holds an internal edge (incl. self-loops)
    internal = labels[rows] == labels[A.indices]
    cyclic = np.unique(labels[rows[internal]])
    best = SpectralEstimate(0.0, 0, True, 0.0, 0.0, np.zeros(A.dim))
    total_iters = 0
    all_conv = True
    worst_gap = 0.0
    upper = 0.0
    for comp in cyclic:
        idx = np.flatnonzero(labels == comp)
        est, lo, hi, its, conv, gap, x = _power_block(A.submatrix(idx), shift, tol, max_iters)
        total_iters += its
        all_conv &= conv
        worst_gap = max(worst_gap, gap)
        rho = max(est - shift, 0.0)
        upper = max(upper, hi - shift)
        if rho >= best.rho:
            vec = np.zeros(A.dim)
            vec[idx] = x
            best = SpectralEstimate(rho, 0, True, 0.0, 0.0, vec)
    return SpectralEstimate(best.rho, total_iters, bool(all_conv), worst_gap, max(upper, 0.0), best.vector)


def spectral_condition(g, tol: float = DEFAULT_TOL, max_iters: int = DEFAULT_MAX_ITERS, top: int = 5):
    """Spectral-radius certificate for parallel LBP on ``g``.

    Passes iff the estimated radius is below ``1 - 10*tol`` and the
    guaranteed upper bound is below 1.
    """
    from .certificates import CertificateReport, bound_matrix

    A = bound_matrix(g)
    est = spectral_radius(A, tol=tol, max_iters=max_iters)
    margin = 10.0 * tol
    passed = est.rho < 1.0 - margin and est.upper_bound < 1.0
    edges = g.edges
    worst = []
    if est.vector is not None and est.rho > 0:
        for e in np.argsort(-est.vector, kind="stable")[:top]:
            if est.vector[e] <= 0:
                break
            worst.append({"factor": edges[e].factor, "var": edges[e].var, "weight": float(est.vector[e])})
    detail = {
        "iterations": est.iterations,
        "converged": est.converged,
        "residual": est.residual,
        "upper_bound": est.upper_bound,
        "margin": margin,
        "worst_edges": worst,
    }
    return CertificateReport("spectral-general", est.rho, passed, detail)
