"""Discrete factor graphs: data model, text format, structural queries and
an exact enumeration oracle.

Factor tables are flat arrays indexed with the *first* listed variable
fastest, i.e. ``index = sum_m state_m * prod_{m' < m} card_{m'}``.  Reshaping a
table with ``order="F"`` therefore yields an array whose axis ``m`` is the
``m``-th variable of the factor.
"""
from __future__ import annotations

import io
import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, NamedTuple, TextIO

import numpy as np

__all__ = [
    "DEFAULT_STATE_CAP",
    "DirectedEdge",
    "Factor",
    "FactorGraph",
    "FactorGraphFormatError",
    "StateSpaceTooLarge",
    "brute_force_marginals",
    "directed_edges",
    "format_float",
    "is_tree",
    "parse_factor_graph",
    "read_factor_graph",
    "serialize_factor_graph",
    "write_blocks",
    "write_factor_graph",
]

DEFAULT_STATE_CAP = 2**20


class FactorGraphFormatError(ValueError):
    """Raised for malformed or invalid factor-graph input."""


class StateSpaceTooLarge(ValueError):
    """Raised when exact enumeration would exceed the configured cap."""


def format_float(x: float) -> str:
    """Shortest decimal representation that round-trips exactly."""
    return repr(float(x))


@dataclass(frozen=True, eq=False)
class Factor:
    """A positive potential over an ordered tuple of distinct variables."""

    vars: tuple[int, ...]
    cards: tuple[int, ...]
    table: np.ndarray

    def __post_init__(self):
        table = np.array(self.table, dtype=np.float64).ravel()
        table.setflags(write=False)
        object.__setattr__(self, "vars", tuple(int(v) for v in self.vars))
        object.__setattr__(self, "cards", tuple(int(c) for c in self.cards))
        object.__setattr__(self, "table", table)
        if len(self.cards) != len(self.vars):
            raise FactorGraphFormatError("factor needs one cardinality per variable")
        if table.size != math.prod(self.cards):
            raise FactorGraphFormatError(
                f"factor table has {table.size} entries, cardinalities {self.cards} need {math.prod(self.cards)}"
            )

    @classmethod
    def from_array(cls, vars, arr) -> "Factor":
        """Build from an n-d array whose axis m belongs to ``vars[m]``."""
        arr = np.asarray(arr, dtype=np.float64)
        return cls(tuple(vars), arr.shape, arr.ravel(order="F"))

    def array(self) -> np.ndarray:
        """Table as an n-d array, axis m = m-th variable."""
        return self.table.reshape(self.cards, order="F")

    @property
    def arity(self) -> int:
        return len(self.vars)

    def __eq__(self, other):
        if not isinstance(other, Factor):
            return NotImplemented
        return (
            self.vars == other.vars
            and self.cards == other.cards
            and np.array_equal(self.table, other.table)
        )

    def __hash__(self):
        return hash((self.vars, self.cards, self.table.tobytes()))

    def __repr__(self):
        return f"Factor(vars={self.vars}, cards={self.cards}, table={self.table.tolist()})"


class DirectedEdge(NamedTuple):
    """A factor -> variable edge ``I -> i`` with ``i`` a member of ``I``."""

    factor: int
    var: int


@dataclass(frozen=True, eq=False)
class FactorGraph:
    """Immutable factor graph with strictly positive factors.

    Construction validates all invariants; use :func:`parse_factor_graph` to
    read the text format.
    """

    cardinalities: tuple[int, ...]
    factors: tuple[Factor, ...] = ()
    var_neighbors: tuple[tuple[int, ...], ...] = field(init=False)

    def __post_init__(self):
        cards = tuple(int(c) for c in self.cardinalities)
        factors = tuple(self.factors)
        object.__setattr__(self, "cardinalities", cards)
        object.__setattr__(self, "factors", factors)
        n = len(cards)
        for i, c in enumerate(cards):
            if c < 2:
                raise FactorGraphFormatError(f"variable {i} has cardinality {c} < 2")
        neighbors: list[list[int]] = [[] for _ in range(n)]
        for idx, f in enumerate(factors):
            if len(set(f.vars)) != len(f.vars):
                raise FactorGraphFormatError(f"factor {idx} repeats a variable: {f.vars}")
            for v, c in zip(f.vars, f.cards):
                if not 0 <= v < n:
                    raise FactorGraphFormatError(f"factor {idx} references variable {v} outside [0, {n})")
                if c != cards[v]:
                    raise FactorGraphFormatError(
                        f"factor {idx} gives variable {v} cardinality {c}, graph has {cards[v]}"
                    )
                neighbors[v].append(idx)
            if not np.all(np.isfinite(f.table)) or not np.all(f.table > 0):
                raise FactorGraphFormatError(f"factor {idx} has a non-positive or non-finite entry")
        object.__setattr__(self, "var_neighbors", tuple(tuple(nb) for nb in neighbors))

    @property
    def num_vars(self) -> int:
        return len(self.cardinalities)

    @property
    def num_factors(self) -> int:
        return len(self.factors)

    def __eq__(self, other):
        if not isinstance(other, FactorGraph):
            return NotImplemented
        return self.cardinalities == other.cardinalities and self.factors == other.factors

    def __repr__(self):
        return f"FactorGraph(num_vars={self.num_vars}, num_factors={self.num_factors})"

    def state_space_size(self) -> int:
        return math.prod(self.cardinalities)

    def factor_shape(self, index: int) -> tuple[int, ...]:
        return self.factors[index].cards

    def factor_array(self, index: int) -> np.ndarray:
        """Table of factor ``index`` as an n-d array, axis m = m-th variable."""
        return self.factors[index].array()

    def is_pairwise(self) -> bool:
        return all(f.arity <= 2 for f in self.factors)

    def is_binary(self) -> bool:
        return all(c == 2 for c in self.cardinalities)

    @cached_property
    def edges(self) -> tuple[DirectedEdge, ...]:
        return tuple(
            DirectedEdge(I, v) for I, f in enumerate(self.factors) for v in f.vars
        )

    @cached_property
    def edge_index(self) -> dict[DirectedEdge, int]:
        return {e: k for k, e in enumerate(self.edges)}


def directed_edges(g: FactorGraph) -> list[DirectedEdge]:
    """All factor -> variable edges, by factor index then member position.

    This order is the canonical index space for messages and edge matrices.
    """
    return list(g.edges)


def is_tree(g: FactorGraph) -> bool:
    """True iff the variable/factor incidence graph has no cycle (forests count)."""
    parent = list(range(g.num_vars + g.num_factors))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for I, f in enumerate(g.factors):
        fnode = g.num_vars + I
        for v in f.vars:
            ra, rb = find(fnode), find(v)
            if ra == rb:
                return False
            parent[ra] = rb
    return True


# --------------------------------------------------------------------------
# Text format
# --------------------------------------------------------------------------

_TOKEN = re.compile(r"\S+")


class _Tokens:
    def __init__(self, text: str):
        self._toks: list[tuple[str, int, int]] = []
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0]
            for m in _TOKEN.finditer(line):
                self._toks.append((m.group(), lineno, m.start() + 1))
        self._pos = 0

    def _where(self, tok) -> str:
        return f"line {tok[1]}, column {tok[2]}"

    def next_int(self, what: str) -> int:
        tok = self._next(what)
        try:
            return int(tok[0])
        except ValueError:
            raise FactorGraphFormatError(
                f"expected integer {what}, got {tok[0]!r} at {self._where(tok)}"
            ) from None

    def next_float(self, what: str) -> tuple[float, tuple]:
        tok = self._next(what)
        try:
            return float(tok[0]), tok
        except ValueError:
            raise FactorGraphFormatError(
                f"expected number {what}, got {tok[0]!r} at {self._where(tok)}"
            ) from None

    def _next(self, what: str):
        if self._pos >= len(self._toks):
            raise FactorGraphFormatError(f"unexpected end of input while reading {what}")
        tok = self._toks[self._pos]
        self._pos += 1
        return tok

    def last(self):
        return self._toks[self._pos - 1]

    def check_done(self):
        if self._pos < len(self._toks):
            tok = self._toks[self._pos]
            raise FactorGraphFormatError(f"trailing token {tok[0]!r} at {self._where(tok)}")


def parse_factor_graph(text: str | TextIO) -> FactorGraph:
    """Parse the whitespace-separated factor-graph text format.

    Layout: number of blocks ``F``; per block the arity ``k``, ``k`` variable
    ids, ``k`` cardinalities, the entry count ``E`` and ``E`` lines of
    ``index value``.  ``#`` starts a comment.
    """
    if not isinstance(text, str):
        text = text.read()
    toks = _Tokens(text)
    nblocks = toks.next_int("factor count")
    if nblocks < 0:
        raise FactorGraphFormatError(f"negative factor count at {toks._where(toks.last())}")
    cards: dict[int, int] = {}
    factors = []
    for b in range(nblocks):
        k = toks.next_int(f"arity of block {b}")
        if k < 1:
            raise FactorGraphFormatError(f"block {b}: arity must be >= 1 at {toks._where(toks.last())}")
        vs = []
        for _ in range(k):
            v = toks.next_int(f"variable id in block {b}")
            if v < 0:
                raise FactorGraphFormatError(f"block {b}: negative variable id at {toks._where(toks.last())}")
            vs.append(v)
        if len(set(vs)) != k:
            raise FactorGraphFormatError(f"block {b}: repeated variable id in {vs}")
        cs = []
        for v in vs:
            c = toks.next_int(f"cardinality in block {b}")
            where = toks._where(toks.last())
            if c < 2:
                raise FactorGraphFormatError(f"block {b}: cardinality {c} < 2 at {where}")
            if cards.setdefault(v, c) != c:
                raise FactorGraphFormatError(
                    f"block {b}: cardinality mismatch for variable {v} ({c} vs {cards[v]}) at {where}"
                )
            cs.append(c)
        size = math.prod(cs)
        nent = toks.next_int(f"entry count of block {b}")
        if nent != size:
            raise FactorGraphFormatError(
                f"block {b}: table length mismatch, {nent} entries declared but "
                f"cardinalities give {size} at {toks._where(toks.last())}"
            )
        table = np.full(size, np.nan)
        for _ in range(nent):
            idx = toks.next_int(f"entry index in block {b}")
            if not 0 <= idx < size or not np.isnan(table[idx]):
                raise FactorGraphFormatError(
                    f"block {b}: invalid or duplicate entry index {idx} at {toks._where(toks.last())}"
                )
            val, tok = toks.next_float(f"entry value in block {b}")
            if not (math.isfinite(val) and val > 0):
                raise FactorGraphFormatError(
                    f"block {b}: entry {idx} = {tok[0]!r} is not positive and finite at {toks._where(tok)}"
                )
            table[idx] = val
        factors.append(Factor(tuple(vs), tuple(cs), table))
    toks.check_done()
    n = max(cards) + 1 if cards else 0
    missing = sorted(set(range(n)) - set(cards))
    if missing:
        raise FactorGraphFormatError(f"variable ids are not contiguous; missing {missing[:10]}")
    return FactorGraph(tuple(cards[i] for i in range(n)), tuple(factors))


def serialize_factor_graph(g: FactorGraph) -> str:
    """Canonical text form; ``parse_factor_graph`` inverts it bit-exactly."""
    out = io.StringIO()
    write_factor_graph(g, out)
    return out.getvalue()


def write_factor_graph(g: FactorGraph, sink: TextIO) -> None:
    write_blocks(sink, ((f.vars, g.factor_shape(I), f.table) for I, f in enumerate(g.factors)))


def write_blocks(
    sink: TextIO, blocks: Iterable[tuple[tuple[int, ...], tuple[int, ...], np.ndarray]]
) -> None:
    """Write ``(vars, cards, flat table)`` blocks in the factor-graph text format."""
    blocks = list(blocks)
    sink.write(f"{len(blocks)}\n")
    for vs, cs, table in blocks:
        sink.write(f"\n{len(vs)}\n")
        sink.write(" ".join(map(str, vs)) + "\n")
        sink.write(" ".join(map(str, cs)) + "\n")
        sink.write(f"{len(table)}\n")
        for idx, val in enumerate(table):
            sink.write(f"{idx} {format_float(val)}\n")


def read_factor_graph(path) -> FactorGraph:
    with open(path, encoding="utf-8") as fh:
        return parse_factor_graph(fh)


# --------------------------------------------------------------------------
# Exact oracle
# --------------------------------------------------------------------------

def brute_force_marginals(
    g: FactorGraph, cap: int = DEFAULT_STATE_CAP
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Exact single-variable and factor marginals by full enumeration.

    Factor marginals are returned flat in the fastest-first convention.
    """
    size = g.state_space_size()
    if size > cap:
        raise StateSpaceTooLarge(f"joint state space has {size} states, cap is {cap}")
    n = g.num_vars
    if n == 0:
        return [], []
    # axis v of ``logp`` is variable v
    logp = np.zeros(g.cardinalities)
    for I, f in enumerate(g.factors):
        arr = np.log(g.factor_array(I))
        order = np.argsort(f.vars)
        arr = np.transpose(arr, order)
        shape = [1] * n
        for v in f.vars:
            shape[v] = g.cardinalities[v]
        logp = logp + arr.reshape(shape)
    p = np.exp(logp - logp.max())
    p /= p.sum()
    var_marg = []
    for v in range(n):
        axes = tuple(a for a in range(n) if a != v)
        m = p.sum(axis=axes)
        var_marg.append(m / m.sum())
    fac_marg = []
    for f in g.factors:
        axes = tuple(a for a in range(n) if a not in f.vars)
        m = p.sum(axis=axes)  # remaining axes in ascending variable order
        m = np.transpose(m, np.argsort(np.argsort(f.vars)))
        m = m.ravel(order="F")
        fac_marg.append(m / m.sum())
    return var_marg, fac_marg
