"""Communication graphs and the loop-free directed graph lemmas.

Undirected networks carry the agents' communication topology. Directed
graphs are used for the layering potential and the flow weights whose
telescoping identity underpins the funnel invariance argument.

Edge ``(j, i)`` in a :class:`DirectedGraph` points from ``j`` to ``i``.
"""
from __future__ import annotations

from collections import deque
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .errors import DimensionMismatch, DisconnectedGraph, EmptyEdgeSet, LoopDetected

__all__ = [
    "DirectedGraph", "UndirectedNetwork",
    "is_connected", "connected_components", "diameter",
    "has_loop", "find_loop", "compute_potential", "compute_flow_weights",
    "flow_identity_residual", "node_conservation_residual", "sources_and_sinks",
    "RATIONAL_NODE_LIMIT",
]

# exact Fraction arithmetic for flow weights up to this many nodes
RATIONAL_NODE_LIMIT = 64


def _norm_edge(i, j):
    return (i, j) if i <= j else (j, i)


class DirectedGraph:
    """Immutable directed graph without self-edges."""

    __slots__ = ("nodes", "edges", "_out", "_in")

    def __init__(self, nodes: Iterable[int] = (), edges: Iterable[Sequence[int]] = ()):
        edges = frozenset((int(j), int(i)) for j, i in edges)
        nodes = frozenset(int(n) for n in nodes)
        for j, i in edges:
            if j == i:
                raise ValueError(f"self-edge ({j}, {i}) not allowed")
        nodes = nodes | {n for e in edges for n in e}
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", edges)
        out = {n: [] for n in nodes}
        inc = {n: [] for n in nodes}
        for j, i in sorted(edges):
            out[j].append(i)
            inc[i].append(j)
        object.__setattr__(self, "_out", {n: tuple(v) for n, v in out.items()})
        object.__setattr__(self, "_in", {n: tuple(v) for n, v in inc.items()})

    def __setattr__(self, name, value):
        raise AttributeError("DirectedGraph is immutable")

    def __copy__(self):
        return self

    def __deepcopy__(self, memo):
        return self

    def successors(self, n: int) -> tuple:
        return self._out[n]

    def predecessors(self, n: int) -> tuple:
        return self._in[n]

    def out_degree(self, n: int) -> int:
        return len(self._out[n])

    def __repr__(self):
        return f"DirectedGraph(nodes={sorted(self.nodes)}, edges={sorted(self.edges)})"

    def __eq__(self, other):
        return (isinstance(other, DirectedGraph)
                and self.nodes == other.nodes and self.edges == other.edges)

    def __hash__(self):
        return hash((self.nodes, self.edges))

    @classmethod
    def parse(cls, tokens: Iterable[str]) -> "DirectedGraph":
        """Build from ``"j->i"`` tokens; a bare ``"k"`` adds an isolated node."""
        nodes, edges = set(), []
        for tok in tokens:
            for part in tok.replace(",", " ").split():
                if "->" in part:
                    j, i = part.split("->", 1)
                    edges.append((int(j), int(i)))
                else:
                    nodes.add(int(part))
        return cls(nodes, edges)


class UndirectedNetwork:
    """Immutable undirected graph with one attribute slot per edge.

    Edges are stored as sorted pairs ``(i, j)`` with ``i < j``; both directed
    views ``(i, j)`` and ``(j, i)`` exist implicitly.
    """

    __slots__ = ("nodes", "edges", "attrs", "_adj")

    def __init__(self, nodes: Iterable[int] = (), edges: Iterable[Sequence[int]] = (),
                 attrs: Mapping[tuple, object] | None = None):
        norm = set()
        for a, b in edges:
            a, b = int(a), int(b)
            if a == b:
                raise ValueError(f"self-edge {{{a}, {b}}} not allowed")
            norm.add(_norm_edge(a, b))
        nodes = frozenset(int(n) for n in nodes) | {n for e in norm for n in e}
        attrs = dict(attrs or {})
        attrs = {_norm_edge(*k): v for k, v in attrs.items()}
        extra = set(attrs) - norm
        if extra:
            raise ValueError(f"attributes for unknown edges {sorted(extra)}")
        adj = {n: set() for n in nodes}
        for a, b in norm:
            adj[a].add(b)
            adj[b].add(a)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", frozenset(norm))
        object.__setattr__(self, "attrs", attrs)
        object.__setattr__(self, "_adj", {n: tuple(sorted(v)) for n, v in adj.items()})

    def __setattr__(self, name, value):
        raise AttributeError("UndirectedNetwork is immutable")

    def __copy__(self):
        return self

    def __deepcopy__(self, memo):
        return self

    def neighbors(self, n: int) -> tuple:
        return self._adj[n]

    def attr(self, i: int, j: int):
        return self.attrs.get(_norm_edge(i, j))

    def has_edge(self, i: int, j: int) -> bool:
        return _norm_edge(i, j) in self.edges

    def directed(self) -> DirectedGraph:
        return DirectedGraph(self.nodes, [e for a, b in self.edges for e in ((a, b), (b, a))])

    def subgraph(self, nodes: Iterable[int]) -> "UndirectedNetwork":
        keep = frozenset(nodes)
        edges = [e for e in self.edges if e[0] in keep and e[1] in keep]
        return UndirectedNetwork(keep, edges, {e: self.attrs[e] for e in edges if e in self.attrs})

    def with_node(self, n: int) -> "UndirectedNetwork":
        return UndirectedNetwork(self.nodes | {n}, self.edges, self.attrs)

    def with_edge(self, i: int, j: int, attr=None) -> "UndirectedNetwork":
        attrs = dict(self.attrs)
        if attr is not None:
            attrs[_norm_edge(i, j)] = attr
        return UndirectedNetwork(self.nodes, set(self.edges) | {_norm_edge(i, j)}, attrs)

    def without_node(self, n: int) -> "UndirectedNetwork":
        return self.subgraph(self.nodes - {n})

    def __repr__(self):
        return f"UndirectedNetwork(nodes={sorted(self.nodes)}, edges={sorted(self.edges)})"


# ---------------------------------------------------------------------------
# undirected utilities

def _bfs_dist(g: UndirectedNetwork, src: int) -> dict:
    dist = {src: 0}
    queue = deque([src])
    while queue:
        n = queue.popleft()
        for m in g.neighbors(n):
            if m not in dist:
                dist[m] = dist[n] + 1
                queue.append(m)
    return dist


def connected_components(g: UndirectedNetwork) -> list:
    """Maximal connected node sets, each sorted, ordered by smallest member."""
    seen = set()
    parts = []
    for n in sorted(g.nodes):
        if n in seen:
            continue
        comp = sorted(_bfs_dist(g, n))
        seen.update(comp)
        parts.append(comp)
    return parts


def is_connected(g: UndirectedNetwork) -> bool:
    if not g.nodes:
        raise ValueError("graph has no nodes")
    return len(connected_components(g)) == 1


def diameter(g: UndirectedNetwork) -> int:
    """Longest shortest-path length (hop count) between any two nodes."""
    if not is_connected(g):
        raise DisconnectedGraph(f"diameter undefined: {len(connected_components(g))} components")
    return max(max(_bfs_dist(g, n).values()) for n in g.nodes)


# ---------------------------------------------------------------------------
# directed lemmas

_WHITE, _GRAY, _BLACK = 0, 1, 2


def find_loop(g: DirectedGraph) -> list | None:
    """Return one loop as a node list ``[i0, ..., il]`` with ``i0 == il``, or None.

    Iterative three-colour DFS; a back edge to a gray node closes a loop.
    """
    color = {n: _WHITE for n in g.nodes}
    parent = {}
    for root in sorted(g.nodes):
        if color[root] != _WHITE:
            continue
        color[root] = _GRAY
        stack = [(root, iter(g.successors(root)))]
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                color[node] = _BLACK
                stack.pop()
                continue
            if color[nxt] == _GRAY:
                cycle = [nxt]
                cur = node
                while cur != nxt:
                    cycle.append(cur)
                    cur = parent[cur]
                cycle.append(nxt)
                return cycle[::-1]
            if color[nxt] == _WHITE:
                color[nxt] = _GRAY
                parent[nxt] = node
                stack.append((nxt, iter(g.successors(nxt))))
    return None


def has_loop(g: DirectedGraph) -> bool:
    return find_loop(g) is not None


def sources_and_sinks(g: DirectedGraph) -> tuple:
    """Nodes without incoming / outgoing edges. Isolated nodes count as sources only."""
    sources = frozenset(n for n in g.nodes if not g.predecessors(n))
    sinks = frozenset(n for n in g.nodes if not g.successors(n) and g.predecessors(n))
    return sources, sinks


def _layers(g: DirectedGraph) -> dict:
    """Longest path length from any source to each node (Kahn order)."""
    indeg = {n: len(g.predecessors(n)) for n in g.nodes}
    layer = {n: 0 for n in g.nodes}
    queue = deque(sorted(n for n, d in indeg.items() if d == 0))
    visited = 0
    while queue:
        n = queue.popleft()
        visited += 1
        for m in g.successors(n):
            layer[m] = max(layer[m], layer[n] + 1)
            indeg[m] -= 1
            if indeg[m] == 0:
                queue.append(m)
    if visited != len(g.nodes):
        raise LoopDetected(f"graph has a loop: {find_loop(g)}")
    return layer


def compute_potential(g: DirectedGraph) -> dict:
    """Integer potential ``chi`` with ``chi[j] - chi[i] >= 1`` on every edge ``(j, i)``.

    ``chi[i] = -k`` where ``k`` is the length of the longest path from a
    source to ``i``; sources get 0. Raises :class:`LoopDetected` otherwise.
    """
    return {n: -k for n, k in sorted(_layers(g).items())}


def compute_flow_weights(g: DirectedGraph, exact: bool | None = None) -> dict:
    """Positive edge weights ``{(j, i): xi}`` conserving flow at interior nodes.

    Sources split a unit flow evenly over their outgoing edges; every other
    node forwards its total inflow split evenly over its out-degree,
    processed layer by layer. Weights are :class:`fractions.Fraction` when
    ``exact`` (default: node count <= ``RATIONAL_NODE_LIMIT``), floats otherwise.
    Disconnected graphs are handled in one pass since each weakly connected
    part has its own sources.
    """
    if not g.edges:
        raise EmptyEdgeSet("flow weights need at least one edge")
    layer = _layers(g)
    if exact is None:
        exact = len(g.nodes) <= RATIONAL_NODE_LIMIT
    one = Fraction(1) if exact else 1.0
    inflow = {n: (0 if exact else 0.0) for n in g.nodes}
    weights = {}
    for n in sorted(g.nodes, key=lambda v: (layer[v], v)):
        d = g.out_degree(n)
        if d == 0:
            continue
        total = one if not g.predecessors(n) else inflow[n]
        share = total / d
        for i in g.successors(n):
            weights[(n, i)] = share
            inflow[i] += share
    return weights


def flow_identity_residual(g: DirectedGraph, w: Mapping[tuple, object],
                           sigma: Mapping[int, float] | Sequence[float]) -> float:
    """``|LHS - RHS|`` of the telescoping flow identity for node values ``sigma``.

    ``sigma`` is either a mapping node -> value or a sequence aligned with
    ``sorted(g.nodes)``.
    """
    order = sorted(g.nodes)
    if isinstance(sigma, Mapping):
        if set(sigma) != set(order):
            raise DimensionMismatch("sigma keys do not match graph nodes")
        sig = {n: sigma[n] for n in order}
    else:
        sigma = list(sigma)
        if len(sigma) != len(order):
            raise DimensionMismatch(f"sigma has {len(sigma)} entries for {len(order)} nodes")
        sig = dict(zip(order, sigma))
    if set(w) != set(g.edges):
        raise DimensionMismatch("weights do not cover exactly the graph edges")
    sources, sinks = sources_and_sinks(g)
    lhs = sum(w[(j, i)] * (sig[j] - sig[i]) for j, i in sorted(g.edges))
    rhs_up = sum(w[(j, i)] * sig[j] for j, i in sorted(g.edges) if j in sources)
    rhs_down = sum(w[(j, i)] * sig[i] for j, i in sorted(g.edges) if i in sinks)
    return float(abs(lhs - (rhs_up - rhs_down)))


def node_conservation_residual(g: DirectedGraph, w: Mapping[tuple, object]) -> float:
    """Max over interior nodes of |inflow - outflow|."""
    sources, sinks = sources_and_sinks(g)
    worst = 0.0
    for n in g.nodes:
        if n in sources or n in sinks:
            continue
        inflow = sum(w[(j, n)] for j in g.predecessors(n))
        outflow = sum(w[(n, i)] for i in g.successors(n))
        worst = max(worst, float(abs(inflow - outflow)))
    return worst

