"""Flat array layout of a factor graph consumed by the message kernels."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .factor_graph import FactorGraph


@dataclass(eq=False)
class MessageLayout:
    """Index arrays describing messages and factors in canonical edge order.

    Edge ``e`` owns ``lam[msg_off[e]:msg_off[e + 1]]``.  The edges of factor
    ``I`` are ``fac_edge_off[I] .. fac_edge_off[I + 1]`` in member order, and
    ``cav_idx[cav_off[e]:cav_off[e + 1]]`` lists the other edges arriving at
    the same variable, ascending.
    """

    edge_card: np.ndarray
    edge_factor: np.ndarray
    edge_var: np.ndarray
    msg_off: np.ndarray
    fac_edge_off: np.ndarray
    log_tables: np.ndarray
    tab_off: np.ndarray
    cav_off: np.ndarray
    cav_idx: np.ndarray
    max_table: int
    max_arity: int
    max_card: int
    cache: dict = field(default_factory=dict, repr=False)

    @property
    def num_edges(self) -> int:
        return len(self.edge_card)

    @property
    def size(self) -> int:
        return int(self.msg_off[-1])


def build_layout(g: FactorGraph) -> MessageLayout:
    edges = g.edges
    eidx = g.edge_index
    E = len(edges)
    edge_card = np.array([g.cardinalities[e.var] for e in edges], dtype=np.int64)
    msg_off = np.zeros(E + 1, dtype=np.int64)
    np.cumsum(edge_card, out=msg_off[1:])
    fac_edge_off = np.zeros(g.num_factors + 1, dtype=np.int64)
    np.cumsum([f.arity for f in g.factors], out=fac_edge_off[1:])
    tab_sizes = [f.table.size for f in g.factors]
    tab_off = np.zeros(g.num_factors + 1, dtype=np.int64)
    np.cumsum(tab_sizes, out=tab_off[1:])
    log_tables = (
        np.concatenate([np.log(f.table) for f in g.factors]) if g.factors else np.zeros(0)
    )
    cav_off = np.zeros(E + 1, dtype=np.int64)
    cav: list[int] = []
    for k, (I, v) in enumerate(edges):
        cav.extend(eidx[(J, v)] for J in g.var_neighbors[v] if J != I)
        cav_off[k + 1] = len(cav)
    return MessageLayout(
        edge_card=edge_card,
        edge_factor=np.array([e.factor for e in edges], dtype=np.int64),
        edge_var=np.array([e.var for e in edges], dtype=np.int64),
        msg_off=msg_off,
        fac_edge_off=fac_edge_off,
        log_tables=np.ascontiguousarray(log_tables, dtype=np.float64),
        tab_off=tab_off,
        cav_off=cav_off,
        cav_idx=np.array(cav, dtype=np.int64),
        max_table=max(tab_sizes, default=0),
        max_arity=max((f.arity for f in g.factors), default=0),
        max_card=max(g.cardinalities, default=0),
    )


def layout_of(g: FactorGraph) -> MessageLayout:
    """Layout for ``g``, built once and memoised on the (immutable) graph."""
    lay = g.__dict__.get("_message_layout")
    if lay is None:
        lay = build_layout(g)
        g.__dict__["_message_layout"] = lay
    return lay
