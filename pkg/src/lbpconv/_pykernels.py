"""Pure numpy implementations of the message kernels.

Same contracts as the compiled ``_ckernels`` module.  Factors are batched by
shape and edges by cardinality so the Python-level loops run over groups
rather than individual factors.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

NAME = "python"


def _plan(layout):
    plan = layout.cache.get("python_plan")
    if plan is not None:
        return plan
    card = layout.edge_card
    off = layout.msg_off
    # cavity sums, grouped by cardinality
    cav_groups = []
    for c in np.unique(card):
        edges = np.flatnonzero(card == c)
        row_of = np.full(layout.num_edges, -1, dtype=np.int64)
        row_of[edges] = np.arange(len(edges))
        counts = layout.cav_off[edges + 1] - layout.cav_off[edges]
        width = int(counts.max(initial=0))
        pad = np.full((len(edges), width), len(edges), dtype=np.int64)
        for r, e in enumerate(edges):
            members = layout.cav_idx[layout.cav_off[e]:layout.cav_off[e + 1]]
            pad[r, : len(members)] = row_of[members]
        slots = off[edges][:, None] + np.arange(c)
        cav_groups.append((slots, pad))
    # factor updates, grouped by table shape
    by_shape: dict[tuple[int, ...], list[int]] = {}
    F = len(layout.fac_edge_off) - 1
    for I in range(F):
        e0, e1 = layout.fac_edge_off[I], layout.fac_edge_off[I + 1]
        by_shape.setdefault(tuple(int(c) for c in card[e0:e1]), []).append(I)
    fac_groups = []
    for shape, facs in by_shape.items():
        facs = np.array(facs, dtype=np.int64)
        size = int(np.prod(shape))
        flat = layout.log_tables[layout.tab_off[facs][:, None] + np.arange(size)]
        logpsi = flat.reshape((len(facs),) + tuple(reversed(shape)))
        logpsi = np.transpose(logpsi, (0,) + tuple(range(len(shape), 0, -1)))
        member_slots = [
            off[layout.fac_edge_off[facs] + m][:, None] + np.arange(c)
            for m, c in enumerate(shape)
        ]
        fac_groups.append((shape, np.ascontiguousarray(logpsi), member_slots))
    plan = (cav_groups, fac_groups)
    layout.cache["python_plan"] = plan
    return plan


def lbp_update(layout, lam, out, damping):
    """One synchronous update: ``out`` receives the gauge-fixed new messages."""
    cav_groups, fac_groups = _plan(layout)
    lam = np.asarray(lam)
    vf = np.empty_like(lam)
    for slots, pad in cav_groups:
        msgs = np.vstack([lam[slots], np.zeros((1, slots.shape[1]))])
        total = np.zeros(slots.shape)
        for col in range(pad.shape[1]):
            total += msgs[pad[:, col]]
        vf[slots] = total
    for shape, logpsi, member_slots in fac_groups:
        k = len(shape)
        incoming = []
        for m in range(k):
            bshape = [len(logpsi)] + [1] * k
            bshape[m + 1] = shape[m]
            incoming.append(vf[member_slots[m]].reshape(bshape))
        for p in range(k):
            t = logpsi
            for m in range(k):
                if m != p:
                    t = t + incoming[m]
            axes = tuple(a + 1 for a in range(k) if a != p)
            if axes:
                top = t.max(axis=axes, keepdims=True)
                new = (top + np.log(np.exp(t - top).sum(axis=axes, keepdims=True))).reshape(len(t), shape[p])
            else:
                new = t
            if damping > 0.0:
                new = (1.0 - damping) * new + damping * lam[member_slots[p]]
            out[member_slots[p]] = new - new.max(axis=1, keepdims=True)


def quotient_residual(a, b, msg_off):
    """Return (sum, max) over edges of half the range of ``a - b``."""
    if len(msg_off) <= 1:
        return 0.0, 0.0
    d = np.asarray(a) - np.asarray(b)
    starts = msg_off[:-1]
    local = 0.5 * (np.maximum.reduceat(d, starts) - np.minimum.reduceat(d, starts))
    total = 0.0
    for x in local.tolist():
        total += x
    return total, float(local.max())


def csr_matvec(indptr, indices, data, v):
    """``A @ v`` for a CSR matrix."""
    n = len(indptr) - 1
    A = sp.csr_matrix((data, indices, indptr), shape=(n, len(v)))
    return A @ np.asarray(v, dtype=np.float64)
