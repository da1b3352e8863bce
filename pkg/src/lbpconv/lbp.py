"""Parallel loopy belief propagation on factor -> variable log-messages.

Messages live in one flat array in canonical edge order.  After every update
each message vector is shifted so its largest component is 0; distances are
measured modulo such constant shifts, so the shift never affects results.

Damping is supported for practical use only.  None of the convergence
certificates in :mod:`lbpconv.certificates` say anything about damped runs.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from . import kernels
from ._layout import MessageLayout, layout_of
from .factor_graph import FactorGraph

__all__ = [
    "LbpOptions",
    "LbpResult",
    "LogMessages",
    "beliefs",
    "init_messages",
    "quotient_distance",
    "run",
    "update_parallel",
]


class LogMessages:
    """One log-message vector per directed factor -> variable edge."""

    __slots__ = ("values", "offsets")

    def __init__(self, values: np.ndarray, offsets: np.ndarray):
        self.values = np.ascontiguousarray(values, dtype=np.float64)
        self.offsets = offsets
        if len(self.values) != int(offsets[-1]):
            raise ValueError("message values do not match the edge layout")

    @classmethod
    def zeros(cls, g: FactorGraph) -> "LogMessages":
        lay = layout_of(g)
        return cls(np.zeros(lay.size), lay.msg_off)

    @classmethod
    def from_list(cls, g: FactorGraph, vectors) -> "LogMessages":
        lay = layout_of(g)
        vals = np.concatenate([np.asarray(v, dtype=np.float64) for v in vectors]) if len(vectors) else np.zeros(0)
        return cls(vals, lay.msg_off)

    def __len__(self):
        return len(self.offsets) - 1

    def __getitem__(self, edge: int) -> np.ndarray:
        return self.values[self.offsets[edge]:self.offsets[edge + 1]]

    def vectors(self) -> list[np.ndarray]:
        return [self[e] for e in range(len(self))]

    def copy(self) -> "LogMessages":
        return LogMessages(self.values.copy(), self.offsets)

    def gauge_fixed(self) -> "LogMessages":
        out = self.values.copy()
        for e in range(len(self)):
            s = slice(self.offsets[e], self.offsets[e + 1])
            out[s] -= out[s].max()
        return LogMessages(out, self.offsets)

    def __repr__(self):
        return f"LogMessages(edges={len(self)})"


@dataclass(frozen=True)
class LbpOptions:
    """Options for :func:`run`.

    ``residual`` selects the convergence metric: ``"sum"`` adds the per-edge
    quotient distances, ``"max"`` takes the worst edge.
    """

    max_iters: int = 10000
    tol: float = 1e-9
    damping: float = 0.0
    init: Literal["uniform", "random"] = "uniform"
    seed: int = 0
    residual: Literal["sum", "max"] = "sum"

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError(f"tol must be > 0, got {self.tol}")
        if not 0.0 <= self.damping < 1.0:
            raise ValueError(f"damping must lie in [0, 1), got {self.damping}")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")
        if self.init not in ("uniform", "random"):
            raise ValueError(f"unknown init strategy {self.init!r}")
        if self.residual not in ("sum", "max"):
            raise ValueError(f"unknown residual metric {self.residual!r}")


@dataclass(frozen=True)
class LbpResult:
    converged: bool
    iterations: int
    final_residual: float
    messages: LogMessages
    var_beliefs: list[np.ndarray] = field(repr=False)
    factor_beliefs: list[np.ndarray] = field(repr=False)


def init_messages(g: FactorGraph, init: str = "uniform", seed: int = 0) -> LogMessages:
    """Initial log-messages.

    ``"uniform"`` gives all zeros.  ``"random"`` draws every entry uniformly
    from [-1, 1] with ``numpy.random.default_rng(seed)`` in canonical order,
    then fixes the gauge.
    """
    lay = layout_of(g)
    if init == "uniform":
        return LogMessages(np.zeros(lay.size), lay.msg_off)
    if init == "random":
        rng = np.random.default_rng(seed)
        vals = rng.uniform(-1.0, 1.0, size=lay.size)
        return LogMessages(vals, lay.msg_off).gauge_fixed()
    raise ValueError(f"unknown init strategy {init!r}")


def _check(g: FactorGraph, msgs: LogMessages) -> MessageLayout:
    lay = layout_of(g)
    if len(msgs.values) != lay.size or not np.array_equal(msgs.offsets, lay.msg_off):
        raise ValueError("messages do not belong to this graph's edge layout")
    return lay


def quotient_distance(a: LogMessages, b: LogMessages, metric: str = "sum") -> float:
    """Sum (or max) over edges of ``(max(a - b) - min(a - b)) / 2``.

    Constant shifts of any single message vector do not change the result.
    """
    if a.values.shape != b.values.shape or not np.array_equal(a.offsets, b.offsets):
        raise ValueError("message layouts differ")
    total, worst = kernels.active.quotient_residual(a.values, b.values, a.offsets)
    return worst if metric == "max" else total


def update_parallel(
    g: FactorGraph, msgs: LogMessages, damping: float = 0.0, metric: str = "sum", backend: str | None = None
) -> tuple[LogMessages, float]:
    """Recompute every message from the previous snapshot.

    Returns the new (gauge-fixed) messages and their quotient distance to the
    old ones.
    """
    lay = _check(g, msgs)
    kern = kernels.get(backend)
    out = np.empty(lay.size)
    kern.lbp_update(lay, msgs.values, out, float(damping))
    total, worst = kern.quotient_residual(out, msgs.values, lay.msg_off)
    return LogMessages(out, lay.msg_off), (worst if metric == "max" else total)


def _logsumexp_normalize(logp: np.ndarray) -> np.ndarray:
    p = np.exp(logp - logp.max())
    return p / p.sum()


def beliefs(g: FactorGraph, msgs: LogMessages) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Normalised variable and factor beliefs from factor -> variable messages.

    Factor beliefs are flat in the fastest-first table convention.
    """
    _check(g, msgs)
    eidx = g.edge_index
    var_b = []
    for v in range(g.num_vars):
        acc = np.zeros(g.cardinalities[v])
        for I in g.var_neighbors[v]:
            acc = acc + msgs[eidx[(I, v)]]
        var_b.append(_logsumexp_normalize(acc))
    fac_b = []
    for I, f in enumerate(g.factors):
        shape = g.factor_shape(I)
        t = np.log(g.factor_array(I))
        for m, v in enumerate(f.vars):
            # variable -> factor message: product of the other incoming messages
            vf = np.zeros(shape[m])
            for J in g.var_neighbors[v]:
                if J != I:
                    vf = vf + msgs[eidx[(J, v)]]
            bshape = [1] * len(shape)
            bshape[m] = shape[m]
            t = t + vf.reshape(bshape)
        fac_b.append(_logsumexp_normalize(t).ravel(order="F"))
    return var_b, fac_b


def run(
    g: FactorGraph,
    opts: LbpOptions | None = None,
    init: LogMessages | None = None,
    backend: str | None = None,
) -> LbpResult:
    """Iterate parallel updates until the residual drops to ``opts.tol``.

    Non-convergence within ``opts.max_iters`` is reported through
    ``converged=False``, never raised.
    """
    opts = opts or LbpOptions()
    lay = layout_of(g)
    msgs = init_messages(g, opts.init, opts.seed) if init is None else init
    _check(g, msgs)
    kern = kernels.get(backend)
    cur = msgs.values.copy()
    nxt = np.empty_like(cur)
    residual = float("inf")
    converged = False
    it = 0
    damping = float(opts.damping)
    use_max = opts.residual == "max"
    if lay.num_edges == 0:
        converged, residual = True, 0.0
    while not converged and it < opts.max_iters:
        kern.lbp_update(lay, cur, nxt, damping)
        total, worst = kern.quotient_residual(nxt, cur, lay.msg_off)
        residual = worst if use_max else total
        cur, nxt = nxt, cur
        it += 1
        converged = residual <= opts.tol
    final = LogMessages(cur, lay.msg_off)
    vb, fb = beliefs(g, final)
    return LbpResult(converged, it, float(residual), final, vb, fb)
