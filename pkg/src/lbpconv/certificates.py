"""Sufficient conditions for parallel LBP to converge to a unique fixed point.

Every condition compares a nonnegative number with 1.  A value below 1 means
convergence from any initial messages is guaranteed; a value of 1 or more is
inconclusive, never a proof of divergence.

Messages sent by single-variable factors never change after the first update,
so edges leaving such factors are left out of the column (sender) side of the
bound matrices.  With that convention the general conditions reduce exactly
to the tanh|J| conditions on binary pairwise models with local fields.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .factor_graph import Factor, FactorGraph
from .spectral import EdgeMatrix, spectral_radius, DEFAULT_TOL, DEFAULT_MAX_ITERS

__all__ = [
    "ATANH_CLAMP",
    "CertificateReport",
    "IsingModel",
    "binary_update",
    "bound_matrix",
    "bound_matrix_binary",
    "ihler_condition",
    "l1_condition_binary",
    "l1_condition_general",
    "spectral_condition_binary",
    "strength_D_pairwise",
    "strength_N",
    "to_ising",
]

ATANH_CLAMP = 1e-15
_SPINS = np.array([-1.0, 1.0])


@dataclass(frozen=True)
class CertificateReport:
    """Outcome of one convergence condition.

    ``passed`` is True only when convergence to a unique fixed point is
    guaranteed.
    """

    condition: str
    value: float
    passed: bool
    detail: dict = field(default_factory=dict)

    @property
    def verdict(self) -> str:
        return "GUARANTEED" if self.passed else "INCONCLUSIVE"

    def to_dict(self) -> dict:
        return {
            "condition": self.condition,
            "value": float(self.value),
            "pass": bool(self.passed),
            "detail": self.detail,
        }


# --------------------------------------------------------------------------
# Binary pairwise (Ising) view
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class IsingModel:
    """P(x) ~ exp(sum J_ij x_i x_j + sum theta_i x_i) over spins x_i = +-1.

    Coupling keys are stored as ``(i, j)`` with ``i < j``.  Directed pairs
    ``i -> j`` are ordered by coupling key, ``i -> j`` before ``j -> i``.
    """

    num_vars: int
    couplings: Mapping[tuple[int, int], float]
    fields: np.ndarray

    def __post_init__(self):
        norm: dict[tuple[int, int], float] = {}
        for (i, j), J in self.couplings.items():
            i, j = int(i), int(j)
            if i == j:
                raise ValueError(f"self-coupling on variable {i}")
            if not (0 <= i < self.num_vars and 0 <= j < self.num_vars):
                raise ValueError(f"coupling ({i}, {j}) outside [0, {self.num_vars})")
            if not np.isfinite(J):
                raise ValueError(f"non-finite coupling on ({i}, {j})")
            key = (min(i, j), max(i, j))
            if key in norm:
                raise ValueError(f"duplicate coupling key {key}")
            norm[key] = float(J)
        fields = np.zeros(self.num_vars) if self.fields is None else np.array(self.fields, dtype=np.float64)
        if fields.shape != (self.num_vars,) or not np.all(np.isfinite(fields)):
            raise ValueError("fields must be a finite vector of length num_vars")
        object.__setattr__(self, "couplings", dict(sorted(norm.items())))
        object.__setattr__(self, "fields", fields)
        nbrs: list[list[int]] = [[] for _ in range(self.num_vars)]
        pairs = []
        for i, j in self.couplings:
            nbrs[i].append(j)
            nbrs[j].append(i)
            pairs += [(i, j), (j, i)]
        object.__setattr__(self, "neighbors", tuple(tuple(sorted(n)) for n in nbrs))
        object.__setattr__(self, "directed_pairs", tuple(pairs))
        object.__setattr__(self, "pair_index", {p: k for k, p in enumerate(pairs)})

    def coupling(self, i: int, j: int) -> float:
        return self.couplings.get((min(i, j), max(i, j)), 0.0)

    def _cavity_plan(self):
        plan = self.__dict__.get("_plan")
        if plan is None:
            # for output j -> i: the incoming k -> j with k != i
            plan = [
                [self.pair_index[(k, j)] for k in self.neighbors[j] if k != i]
                for (j, i) in self.directed_pairs
            ]
            self.__dict__["_plan"] = plan
        return plan


def to_ising(g: FactorGraph) -> IsingModel:
    """Binary pairwise factor graph -> Ising couplings and fields.

    State 0 maps to spin -1 and state 1 to +1.  Parallel pair factors add up;
    constant offsets are dropped.
    """
    if not g.is_binary():
        raise ValueError("to_ising needs binary variables")
    if not g.is_pairwise():
        raise ValueError("to_ising needs factors of arity <= 2")
    J: dict[tuple[int, int], float] = {}
    theta = np.zeros(g.num_vars)
    for I, f in enumerate(g.factors):
        L = np.log(g.factor_array(I))
        if f.arity == 1:
            theta[f.vars[0]] += 0.5 * float(_SPINS @ L)
            continue
        i, j = f.vars
        key = (min(i, j), max(i, j))
        J[key] = J.get(key, 0.0) + 0.25 * float(_SPINS @ L @ _SPINS)
        theta[i] += 0.25 * float(_SPINS @ L.sum(axis=1))
        theta[j] += 0.25 * float(L.sum(axis=0) @ _SPINS)
    return IsingModel(g.num_vars, J, theta)


def binary_update(m: IsingModel, nu) -> np.ndarray:
    """Parallel update of the scalar messages ``nu[j -> i]``.

    ``new[j -> i] = atanh(tanh(J_ij) * tanh(theta_j + sum_{k in N_j \\ i} nu[k -> j]))``,
    with the tanh product clamped to ``[-1 + 1e-15, 1 - 1e-15]``.
    """
    nu = np.asarray(nu, dtype=np.float64)
    if nu.shape != (len(m.directed_pairs),):
        raise ValueError("nu must have one entry per directed pair")
    out = np.empty_like(nu)
    for d, ((j, i), incoming) in enumerate(zip(m.directed_pairs, m._cavity_plan())):
        field_j = m.fields[j]
        for q in incoming:
            field_j += nu[q]
        t = np.tanh(m.coupling(i, j)) * np.tanh(field_j)
        out[d] = np.arctanh(min(max(t, -1.0 + ATANH_CLAMP), 1.0 - ATANH_CLAMP))
    return out


def l1_condition_binary(m: IsingModel) -> CertificateReport:
    """``max_l max_{k in N_l} sum_{i in N_l \\ k} tanh|J_il| < 1``."""
    best, worst = 0.0, None
    for l in range(m.num_vars):
        for k in m.neighbors[l]:
            s = 0.0
            for i in m.neighbors[l]:
                if i != k:
                    s += np.tanh(abs(m.coupling(i, l)))
            if worst is None or s > best:
                best, worst = s, (k, l)
    detail = {"worst_pair": list(worst) if worst else None}
    return CertificateReport("l1-binary", float(best), bool(best < 1.0), detail)


def bound_matrix_binary(m: IsingModel) -> EdgeMatrix:
    """``A[j->i, k->j] = tanh|J_ij|`` for ``k in N_j \\ i``, over directed pairs."""
    rows, cols, vals = [], [], []
    for d, ((j, i), incoming) in enumerate(zip(m.directed_pairs, m._cavity_plan())):
        w = np.tanh(abs(m.coupling(i, j)))
        if w == 0.0:
            continue
        for q in incoming:
            rows.append(d)
            cols.append(q)
            vals.append(w)
    return EdgeMatrix(len(m.directed_pairs), rows, cols, vals)


def spectral_condition_binary(m: IsingModel, tol: float = DEFAULT_TOL, max_iters: int = DEFAULT_MAX_ITERS) -> CertificateReport:
    est = spectral_radius(bound_matrix_binary(m), tol=tol, max_iters=max_iters)
    passed = est.rho < 1.0 - 10.0 * tol and est.upper_bound < 1.0
    detail = {"iterations": est.iterations, "converged": est.converged, "upper_bound": est.upper_bound}
    return CertificateReport("spectral-binary", est.rho, bool(passed), detail)


# --------------------------------------------------------------------------
# Factor strengths
# --------------------------------------------------------------------------

def _axes(f: Factor, i: int, j: int) -> tuple[int, int]:
    if i == j:
        raise ValueError("strength needs two distinct variables")
    try:
        return f.vars.index(i), f.vars.index(j)
    except ValueError:
        raise ValueError(f"variables {i}, {j} are not both members of factor {f.vars}") from None


def strength_N(f: Factor, i: int, j: int) -> float:
    """Coupling strength of factor ``f`` between member variables ``i`` and ``j``.

    ``sup tanh(1/4 log(psi[a,b,c] psi[a',b',c'] / (psi[a',b,c] psi[a,b',c'])))``
    over ``a != a'`` (states of i), ``b != b'`` (states of j) and all
    assignments ``c, c'`` of the remaining members.  The log ratio splits into
    a term in ``c`` and a term in ``c'``, so each is maximised on its own.
    """
    ai, aj = _axes(f, i, j)
    L = np.log(f.array())
    L = np.moveaxis(L, (ai, aj), (0, 1))
    ci, cj = L.shape[0], L.shape[1]
    L = L.reshape(ci, cj, -1)
    # M[a, a', b] = max_c (L[a, b, c] - L[a', b, c])
    M = (L[:, None, :, :] - L[None, :, :, :]).max(axis=-1)
    total = M[:, :, :, None] + np.transpose(M, (1, 0, 2))[:, :, None, :]
    mask = (~np.eye(ci, dtype=bool))[:, :, None, None] & (~np.eye(cj, dtype=bool))[None, None, :, :]
    return float(np.tanh(0.25 * total[mask].max()))


def strength_D_pairwise(f: Factor) -> float:
    """Dynamic-range strength ``tanh((max log psi - min log psi) / 2)`` of a pair factor."""
    if f.arity != 2:
        raise ValueError(f"strength_D_pairwise needs an arity-2 factor, got arity {f.arity}")
    L = np.log(f.table)
    return float(np.tanh(0.5 * (L.max() - L.min())))


# --------------------------------------------------------------------------
# General factor graphs
# --------------------------------------------------------------------------

def _assemble(g: FactorGraph, strength: Callable[[int, int, int], float]) -> EdgeMatrix:
    eidx = g.edge_index
    rows, cols, vals = [], [], []
    cache: dict[tuple[int, int, int], float] = {}
    for e, (I, i) in enumerate(g.edges):
        for j in g.factors[I].vars:
            if j == i:
                continue
            key = (I, i, j)
            if key not in cache:
                cache[key] = strength(I, i, j)
            s = cache[key]
            if s == 0.0:
                continue
            for J in g.var_neighbors[j]:
                if J != I and g.factors[J].arity > 1:
                    rows.append(e)
                    cols.append(eidx[(J, j)])
                    vals.append(s)
    return EdgeMatrix(len(g.edges), rows, cols, vals)


def bound_matrix(g: FactorGraph) -> EdgeMatrix:
    """Sensitivity bounds between factor -> variable messages.

    ``A[I->i, J->j] = N(psi_I, i, j)`` when ``j in I \\ i`` and ``J in N_j \\ I``.
    On binary pairwise graphs the entries are ``tanh|J_ij|``.
    """
    return _assemble(g, lambda I, i, j: strength_N(g.factors[I], i, j))


def _column_report(name: str, g: FactorGraph, A: EdgeMatrix, top: int = 5) -> CertificateReport:
    sums = A.column_sums()
    value = float(sums.max()) if len(sums) else 0.0
    worst = []
    for e in np.argsort(-sums, kind="stable")[:top]:
        if sums[e] <= 0:
            break
        worst.append({"factor": g.edges[e].factor, "var": g.edges[e].var, "column_sum": float(sums[e])})
    return CertificateReport(name, value, bool(value < 1.0), {"worst_edges": worst})


def l1_condition_general(g: FactorGraph) -> CertificateReport:
    """``max_{J->j} sum_{I in N_j \\ J} sum_{i in I \\ j} N(psi_I, i, j) < 1``.

    The value is the largest column sum of :func:`bound_matrix`.
    """
    return _column_report("l1-general", g, bound_matrix(g))


def ihler_condition(g: FactorGraph) -> CertificateReport:
    """Column-sum condition with the dynamic-range strength in place of N.

    Only defined for pairwise graphs.  Since N <= D factor by factor, this
    value is never smaller than :func:`l1_condition_general`.
    """
    if not g.is_pairwise():
        raise ValueError("the dynamic-range condition is only defined for pairwise factor graphs")
    A = _assemble(g, lambda I, i, j: strength_D_pairwise(g.factors[I]))
    return _column_report("ihler-pairwise", g, A)
