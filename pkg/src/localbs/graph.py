"""Finite connected undirected graphs and their neighbourhood combinatorics.

Vertices are dense integers ``0..n-1``.  The closed neighbourhood
``A_v = {v} | adj(v)`` is what the dynamics uses everywhere, so each graph
also carries it in CSR form (``closed_ptr``, ``closed_idx``), sorted
ascending, for the compiled kernels.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import GraphConstructionError, InputError

__all__ = [
    "Graph",
    "VertexMeasure",
    "closed_neighborhood",
    "boundary",
    "vertex_stationary_measure",
    "walk_transition_matrix",
    "cycle",
    "path",
    "complete",
    "star",
    "random_regular",
    "from_edges",
    "from_edge_list",
    "parse_graph_spec",
]


class Graph:
    """Immutable simple connected graph on vertices ``0..n-1``.

    Parameters
    ----------
    adjacency : sequence of iterables of int
        ``adjacency[v]`` lists the neighbours of ``v``.  Must be symmetric,
        free of self-loops, and describe a connected graph.
    labels : sequence, optional
        External vertex names, kept for output only.
    """

    __slots__ = ("_adj", "_labels", "closed_ptr", "closed_idx", "closed_sizes", "_closed_sets")

    def __init__(self, adjacency: Sequence[Iterable[int]], labels: Sequence | None = None):
        n = len(adjacency)
        if n < 1:
            raise GraphConstructionError("graph needs at least one vertex")
        adj = []
        for v, nbrs in enumerate(adjacency):
            row = set()
            for u in nbrs:
                u = int(u)
                if not 0 <= u < n:
                    raise GraphConstructionError(f"edge {{{v},{u}}}: vertex {u} out of range 0..{n - 1}")
                if u == v:
                    raise GraphConstructionError(f"edge {{{v},{v}}}: self-loop")
                row.add(u)
            adj.append(tuple(sorted(row)))
        for v, row in enumerate(adj):
            for u in row:
                if v not in adj[u]:
                    raise GraphConstructionError(f"edge {{{v},{u}}}: adjacency not symmetric")
        unreached = _unreachable_from_zero(adj)
        if unreached is not None:
            raise GraphConstructionError(f"graph is disconnected: vertex {unreached} unreachable from vertex 0")
        if labels is not None and len(labels) != n:
            raise GraphConstructionError("labels must have one entry per vertex")

        self._adj = tuple(adj)
        self._labels = tuple(labels) if labels is not None else tuple(range(n))
        ptr = np.zeros(n + 1, dtype=np.int64)
        idx = []
        for v, row in enumerate(adj):
            closed = sorted(row + (v,))
            idx.extend(closed)
            ptr[v + 1] = ptr[v] + len(closed)
        self.closed_ptr = ptr
        self.closed_idx = np.asarray(idx, dtype=np.int64)
        self.closed_sizes = np.diff(ptr)
        for arr in (self.closed_ptr, self.closed_idx, self.closed_sizes):
            arr.flags.writeable = False
        self._closed_sets = tuple(frozenset(row + (v,)) for v, row in enumerate(adj))

    @property
    def n(self) -> int:
        return len(self._adj)

    vertex_count = n

    @property
    def adjacency(self) -> tuple[tuple[int, ...], ...]:
        return self._adj

    @property
    def labels(self) -> tuple:
        return self._labels

    def degree(self, v: int) -> int:
        return len(self._adj[self.check_vertex(v)])

    @property
    def degrees(self) -> np.ndarray:
        return self.closed_sizes - 1

    def edges(self) -> list[tuple[int, int]]:
        return [(v, u) for v, row in enumerate(self._adj) for u in row if v < u]

    def check_vertex(self, v) -> int:
        try:
            iv = int(v)
        except (TypeError, ValueError):
            raise InputError(f"invalid vertex {v!r}") from None
        if iv != v or not 0 <= iv < self.n:
            raise InputError(f"invalid vertex {v!r}: graph has vertices 0..{self.n - 1}")
        return iv

    def closed(self, v: int) -> frozenset[int]:
        """A_v as a frozenset (no validation; use closed_neighborhood for that)."""
        return self._closed_sets[v]

    def regular_degree(self) -> int | None:
        """The common degree if the graph is regular, else None."""
        d = self.degrees
        return int(d[0]) if np.all(d == d[0]) else None

    def membership_matrix(self) -> np.ndarray:
        """Boolean matrix ``M[x, v] = v in A_x``."""
        m = np.zeros((self.n, self.n), dtype=bool)
        for v in range(self.n):
            m[v, self.closed_idx[self.closed_ptr[v]:self.closed_ptr[v + 1]]] = True
        return m

    def __eq__(self, other):
        return isinstance(other, Graph) and self._adj == other._adj

    def __hash__(self):
        return hash(self._adj)

    def __repr__(self):
        return f"Graph(n={self.n}, edges={len(self.edges())})"


def _unreachable_from_zero(adj) -> int | None:
    seen = [False] * len(adj)
    seen[0] = True
    queue = deque([0])
    while queue:
        v = queue.popleft()
        for u in adj[v]:
            if not seen[u]:
                seen[u] = True
                queue.append(u)
    for v, ok in enumerate(seen):
        if not ok:
            return v
    return None


@dataclass(frozen=True)
class VertexMeasure:
    """Stationary law of the vertex walk, stored as exact integers.

    ``weight(v) = numerators[v] / denominator`` with ``numerators[v] = |A_v|``
    and ``denominator = S_G``.
    """

    numerators: tuple[int, ...]
    denominator: int

    def weight(self, v: int) -> Fraction:
        return Fraction(self.numerators[v], self.denominator)

    @property
    def weights(self) -> tuple[Fraction, ...]:
        return tuple(Fraction(a, self.denominator) for a in self.numerators)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.numerators, dtype=np.float64) / self.denominator


def closed_neighborhood(g: Graph, v: int) -> frozenset[int]:
    """A_v: the neighbours of ``v`` together with ``v``."""
    return g.closed(g.check_vertex(v))


def boundary(g: Graph, v: int) -> frozenset[int]:
    """Vertices of A_v whose own closed neighbourhood leaves A_v."""
    av = closed_neighborhood(g, v)
    return frozenset(z for z in av if not g.closed(z) <= av)


def vertex_stationary_measure(g: Graph) -> VertexMeasure:
    sizes = tuple(int(s) for s in g.closed_sizes)
    return VertexMeasure(sizes, sum(sizes))


# --------------------------------------------------------------------- builders


def walk_transition_matrix(g: Graph) -> np.ndarray:
    """Transition matrix of the lazy walk, ``p(v, w) = 1{w in A_v} / |A_v|``."""
    m = g.membership_matrix().astype(np.float64)
    return m / m.sum(axis=1, keepdims=True)


def from_edges(n: int, edges: Iterable[tuple[int, int]], labels=None) -> Graph:
    adj = [set() for _ in range(n)]
    for u, v in edges:
        u, v = int(u), int(v)
        if u == v:
            raise GraphConstructionError(f"edge {{{u},{v}}}: self-loop")
        if not (0 <= u < n and 0 <= v < n):
            raise GraphConstructionError(f"edge {{{u},{v}}}: vertex out of range 0..{n - 1}")
        adj[u].add(v)
        adj[v].add(u)
    return Graph(adj, labels=labels)


def cycle(n: int) -> Graph:
    """The N-cycle on ``0..N-1`` (N >= 3)."""
    if int(n) != n or n < 3:
        raise GraphConstructionError(f"cycle: N must be an integer >= 3, got {n}")
    return from_edges(n, ((v, (v + 1) % n) for v in range(n)))


def path(n: int) -> Graph:
    if int(n) != n or n < 2:
        raise GraphConstructionError(f"path: n must be an integer >= 2, got {n}")
    return from_edges(n, ((v, v + 1) for v in range(n - 1)))


def complete(n: int) -> Graph:
    if int(n) != n or n < 1:
        raise GraphConstructionError(f"complete: n must be a positive integer, got {n}")
    return from_edges(n, ((u, v) for u in range(n) for v in range(u + 1, n)))


def star(k: int) -> Graph:
    """K_{1,k}: centre 0 joined to leaves ``1..k``."""
    if int(k) != k or k < 1:
        raise GraphConstructionError(f"star: k must be a positive integer, got {k}")
    return from_edges(k + 1, ((0, v) for v in range(1, k + 1)))


def random_regular(n: int, d: int, seed: int, max_tries: int = 1000) -> Graph:
    """Uniform random connected d-regular graph, deterministic given ``seed``.

    Draws are rejected until connected; attempt ``i`` uses the networkx seed
    derived from ``(seed, i)``.
    """
    import networkx as nx

    if d < 1 or d >= n or (n * d) % 2:
        raise GraphConstructionError(f"random_regular: need 1 <= d < n and n*d even, got n={n}, d={d}")
    root = np.random.SeedSequence(int(seed))
    for attempt in range(max_tries):
        sub = np.random.SeedSequence(root.entropy, spawn_key=(attempt,))
        nx_seed = int(sub.generate_state(1, dtype=np.uint32)[0])
        h = nx.random_regular_graph(d, n, seed=nx_seed)
        if nx.is_connected(h):
            return from_edges(n, h.edges())
    raise GraphConstructionError(f"random_regular: no connected graph in {max_tries} tries (n={n}, d={d})")


def from_edge_list(text: str) -> Graph:
    """Parse ``u v`` lines (``#`` starts a comment).

    Integer labels keep their numeric order; otherwise vertices are numbered
    by first appearance.  Repeated edges collapse; self-loops are rejected.
    """
    pairs = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise GraphConstructionError(f"line {lineno}: expected 'u v', got {raw.strip()!r}")
        if parts[0] == parts[1]:
            raise GraphConstructionError(f"line {lineno}: self-loop on {parts[0]!r}")
        pairs.append((parts[0], parts[1]))
    if not pairs:
        raise GraphConstructionError("edge list contains no edges")

    tokens = []
    for p in pairs:
        for tok in p:
            if tok not in tokens:
                tokens.append(tok)
    try:
        order = sorted(tokens, key=int)
        labels = [int(t) for t in order]
    except ValueError:
        order = tokens
        labels = list(order)
    index = {tok: i for i, tok in enumerate(order)}
    return from_edges(len(order), ((index[a], index[b]) for a, b in pairs), labels=labels)


def parse_graph_spec(spec: str) -> Graph:
    """Build a graph from a short spec such as ``cycle:8`` or ``regular:10:3:42``.

    Recognised forms: ``cycle:N``, ``path:N``, ``complete:N``, ``star:K``,
    ``regular:N:D:SEED`` and ``file:PATH`` (edge list).
    """
    kind, _, rest = spec.partition(":")
    args = rest.split(":") if rest else []
    try:
        if kind == "file":
            return from_edge_list(Path(rest).read_text())
        ints = [int(a) for a in args]
        if kind == "cycle" and len(ints) == 1:
            return cycle(ints[0])
        if kind == "path" and len(ints) == 1:
            return path(ints[0])
        if kind == "complete" and len(ints) == 1:
            return complete(ints[0])
        if kind == "star" and len(ints) == 1:
            return star(ints[0])
        if kind == "regular" and len(ints) == 3:
            return random_regular(*ints)
    except (ValueError, OSError) as exc:
        if isinstance(exc, InputError):
            raise
        raise InputError(f"bad graph spec {spec!r}: {exc}") from None
    raise InputError(f"bad graph spec {spec!r}")
