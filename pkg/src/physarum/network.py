"""Graph data model for Physarum networks.

A :class:`Network` is an undirected multigraph with positive edge lengths and
node supplies.  Every edge keeps the orientation ``(u, v)`` it was declared
with; signed flows are always reported relative to it.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Any, Iterable, Mapping

import networkx as nx
import numpy as np

log = logging.getLogger(__name__)

SUPPLY_TOL = 1e-9


class NetworkError(ValueError):
    """Raised for malformed or invalid network descriptions."""


@dataclass(frozen=True)
class Edge:
    id: str
    u: str
    v: str
    length: float

    def other(self, node: str) -> str:
        return self.v if node == self.u else self.u


@dataclass(frozen=True, eq=False)
class Network:
    nodes: tuple[str, ...]
    edges: tuple[Edge, ...]
    supplies: Mapping[str, float]
    source_node: str | None = None
    dead_edges: frozenset[str] = field(default=frozenset(), compare=False)

    @cached_property
    def key(self) -> tuple:
        return (
            self.nodes,
            self.edges,
            tuple(sorted(self.supplies.items())),
            self.source_node,
        )

    def __eq__(self, other):
        if not isinstance(other, Network):
            return NotImplemented
        return self.key == other.key

    def __hash__(self):
        return hash(self.key)

    # -- sizes and lookups -------------------------------------------------
    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def m(self) -> int:
        return len(self.edges)

    @cached_property
    def node_index(self) -> dict[str, int]:
        return {v: i for i, v in enumerate(self.nodes)}

    @cached_property
    def edge_index(self) -> dict[str, int]:
        return {e.id: i for i, e in enumerate(self.edges)}

    @cached_property
    def edge_ids(self) -> tuple[str, ...]:
        return tuple(e.id for e in self.edges)

    @cached_property
    def lengths(self) -> np.ndarray:
        arr = np.array([e.length for e in self.edges], dtype=float)
        arr.setflags(write=False)
        return arr

    @cached_property
    def b(self) -> np.ndarray:
        arr = np.array([self.supplies.get(v, 0.0) for v in self.nodes], dtype=float)
        arr.setflags(write=False)
        return arr

    @cached_property
    def incidence(self) -> np.ndarray:
        """Edge-node incidence matrix, +1 at the tail ``u`` and -1 at the head ``v``."""
        B = np.zeros((self.m, self.n))
        for k, e in enumerate(self.edges):
            B[k, self.node_index[e.u]] += 1.0
            B[k, self.node_index[e.v]] -= 1.0
        B.setflags(write=False)
        return B

    @property
    def L_min(self) -> float:
        return float(self.lengths.min())

    @property
    def L_max(self) -> float:
        return float(self.lengths.max())

    def edge(self, edge_id: str) -> Edge:
        return self.edges[self.edge_index[edge_id]]

    def incident(self, node: str) -> list[Edge]:
        return [e for e in self.edges if node in (e.u, e.v) and e.u != e.v]

    # -- terminals ---------------------------------------------------------
    @property
    def terminals(self) -> list[str]:
        return [v for v in self.nodes if abs(self.supplies.get(v, 0.0)) > SUPPLY_TOL]

    @property
    def is_shortest_path(self) -> bool:
        t = self.terminals
        return (
            len(t) == 2
            and math.isclose(self.supplies[t[0]], -self.supplies[t[1]])
            and math.isclose(abs(self.supplies[t[0]]), 1.0)
        )

    @property
    def s0(self) -> str:
        if not self.is_shortest_path:
            raise NetworkError("not a shortest-path instance")
        return next(v for v in self.terminals if self.supplies[v] > 0)

    @property
    def s1(self) -> str:
        if not self.is_shortest_path:
            raise NetworkError("not a shortest-path instance")
        return next(v for v in self.terminals if self.supplies[v] < 0)

    @property
    def source(self) -> str:
        """Node whose single-node cut defines the source-cut penalty W."""
        if self.source_node is not None:
            return self.source_node
        return self.s0

    @property
    def ground(self) -> str:
        """Most negative supply node (first in insertion order on ties)."""
        return min(self.nodes, key=lambda v: (self.supplies.get(v, 0.0), self.node_index[v]))

    # -- conversions -------------------------------------------------------
    def to_graph(self) -> nx.MultiGraph:
        g = nx.MultiGraph()
        g.add_nodes_from(self.nodes)
        for e in self.edges:
            g.add_edge(e.u, e.v, key=e.id, length=e.length)
        return g

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "nodes": list(self.nodes),
            "edges": [{"id": e.id, "u": e.u, "v": e.v, "length": e.length} for e in self.edges],
            "supplies": {v: self.supplies[v] for v in self.nodes if v in self.supplies},
        }
        if self.source_node is not None:
            out["source"] = self.source_node
        return out

    def with_supplies(self, supplies: Mapping[str, float], source_node: str | None = None) -> Network:
        return build_network(self.nodes, self.edges, supplies, source_node=source_node)


def _dead_edges(nodes: Iterable[str], edges: Iterable[Edge], terminals: list[str]) -> frozenset[str]:
    # An edge lies on a simple terminal-to-terminal path iff it shares a
    # biconnected component with the hub joined to every terminal.
    edges = list(edges)
    if len(terminals) < 2:
        return frozenset(e.id for e in edges)
    g = nx.Graph()
    g.add_nodes_from(nodes)
    hub = object()
    for e in edges:
        if e.u != e.v:
            g.add_edge(e.u, e.v)
    for t in terminals:
        g.add_edge(hub, t)
    live: set[frozenset] = set()
    for comp in nx.biconnected_component_edges(g):
        comp = list(comp)
        if any(hub in pair for pair in comp):
            live.update(frozenset(pair) for pair in comp)
    return frozenset(e.id for e in edges if e.u == e.v or frozenset((e.u, e.v)) not in live)


def build_network(
    nodes: Iterable[str],
    edges: Iterable[Edge | tuple],
    supplies: Mapping[str, float],
    source_node: str | None = None,
) -> Network:
    """Validate and assemble a :class:`Network`.

    ``edges`` may hold :class:`Edge` objects or ``(id, u, v, length)`` tuples.
    """
    nodes = tuple(str(v) for v in nodes)
    if len(set(nodes)) != len(nodes):
        raise NetworkError("duplicate node ids")
    if not nodes:
        raise NetworkError("network has no nodes")
    node_set = set(nodes)
    elist = []
    for e in edges:
        if not isinstance(e, Edge):
            eid, u, v, length = e
            e = Edge(str(eid), str(u), str(v), float(length))
        if e.u not in node_set or e.v not in node_set:
            raise NetworkError(f"edge {e.id!r} references an unknown node")
        if not (math.isfinite(e.length) and e.length > 0):
            raise NetworkError(f"edge {e.id!r} has nonpositive length {e.length}")
        if e.u == e.v:
            raise NetworkError(f"edge {e.id!r} is a self-loop")
        elist.append(e)
    if len({e.id for e in elist}) != len(elist):
        raise NetworkError("duplicate edge ids")
    if not elist:
        raise NetworkError("network has no edges")

    sup = {}
    for v, val in supplies.items():
        if v not in node_set:
            raise NetworkError(f"supply given for unknown node {v!r}")
        val = float(val)
        if not math.isfinite(val):
            raise NetworkError(f"supply of {v!r} is not finite")
        if val != 0.0:
            sup[str(v)] = val
    total = sum(sup.values())
    if abs(total) > SUPPLY_TOL:
        raise NetworkError(f"unbalanced supplies: sum b_v = {total:g}")
    if source_node is not None and source_node not in node_set:
        raise NetworkError(f"unknown source node {source_node!r}")

    g = nx.MultiGraph()
    g.add_nodes_from(nodes)
    g.add_edges_from((e.u, e.v) for e in elist)
    if not nx.is_connected(g):
        raise NetworkError("graph is disconnected")

    terminals = [v for v in nodes if v in sup]
    dead = _dead_edges(nodes, elist, terminals)
    if dead and len(terminals) >= 2:
        log.warning("edges on no supply-to-demand path: %s", sorted(dead))
    return Network(nodes, tuple(elist), sup, source_node=source_node, dead_edges=dead)


def shortest_path_instance(network: Network, s0: str, s1: str) -> Network:
    """Copy of ``network`` with a unit supply at ``s0`` and unit demand at ``s1``."""
    if s0 not in network.node_index or s1 not in network.node_index:
        raise NetworkError(f"unknown node in ({s0!r}, {s1!r})")
    if s0 == s1:
        raise NetworkError("source and sink must differ")
    return network.with_supplies({s0: 1.0, s1: -1.0})


# -- scenario documents ------------------------------------------------------

def parse_network(doc: str | Mapping[str, Any]) -> Network:
    """Build a network from a scenario document (JSON text or parsed mapping).

    ``supplies`` is either a ``{node: value}`` map or ``{"s0": node, "s1": node}``
    naming the endpoints of a shortest-path instance.
    """
    if isinstance(doc, str):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise NetworkError(f"malformed document: {exc}") from exc
    if not isinstance(doc, Mapping):
        raise NetworkError("scenario document must be a JSON object")
    try:
        nodes = doc["nodes"]
        raw_edges = doc["edges"]
        raw_sup = doc.get("supplies", {})
        edges = [(e["id"], e["u"], e["v"], e["length"]) for e in raw_edges]
    except (KeyError, TypeError) as exc:
        raise NetworkError(f"malformed document: missing field {exc}") from exc
    if not isinstance(raw_sup, Mapping):
        raise NetworkError("malformed document: supplies must be an object")
    try:
        for e in edges:
            float(e[3])
    except (TypeError, ValueError) as exc:
        raise NetworkError(f"malformed document: {exc}") from exc

    if set(raw_sup) == {"s0", "s1"} and all(isinstance(x, str) for x in raw_sup.values()):
        net = build_network(nodes, edges, {})
        return shortest_path_instance(net, raw_sup["s0"], raw_sup["s1"])
    try:
        sup = {k: float(x) for k, x in raw_sup.items()}
    except (TypeError, ValueError) as exc:
        raise NetworkError(f"malformed document: {exc}") from exc
    return build_network(nodes, edges, sup, source_node=doc.get("source"))


def dump_network(network: Network) -> str:
    return json.dumps(network.to_dict(), indent=2)


def initial_diameters(network: Network, spec: Any = None, seed: int = 0) -> np.ndarray:
    """Resolve an ``initial_diameters`` scenario entry to a positive vector.

    Accepted forms: ``None`` (uniform 1), a number, ``{"uniform": x}``,
    ``{"random": [lo, hi], "seed": k}`` or an ``{edge_id: value}`` map.
    """
    if spec is None:
        D = np.ones(network.m)
    elif isinstance(spec, (int, float)):
        D = np.full(network.m, float(spec))
    elif isinstance(spec, Mapping) and "uniform" in spec:
        D = np.full(network.m, float(spec["uniform"]))
    elif isinstance(spec, Mapping) and "random" in spec:
        lo, hi = spec["random"]
        rng = np.random.default_rng(spec.get("seed", seed))
        D = rng.uniform(lo, hi, network.m)
    elif isinstance(spec, Mapping):
        D = np.ones(network.m)
        for eid, val in spec.items():
            if eid not in network.edge_index:
                raise NetworkError(f"initial diameter for unknown edge {eid!r}")
            D[network.edge_index[eid]] = float(val)
    else:
        raise NetworkError(f"cannot interpret initial_diameters {spec!r}")
    if not np.all(np.isfinite(D)) or np.any(D <= 0):
        raise NetworkError("initial diameters must be positive and finite")
    return D


# -- standard instances --------------------------------------------------------

def parallel_links(lengths: Iterable[float]) -> Network:
    lengths = list(lengths)
    edges = [(f"e{i + 1}", "s0", "s1", L) for i, L in enumerate(lengths)]
    return build_network(["s0", "s1"], edges, {"s0": 1.0, "s1": -1.0})


def wheatstone(La=1.0, Lb=1.0, Lc=1.0, Ld=1.0, Le=1.0) -> Network:
    """Wheatstone bridge: a = s0-R, b = s0-L, c = R-s1, d = L-s1, e = L-R."""
    edges = [
        ("a", "s0", "R", La),
        ("b", "s0", "L", Lb),
        ("c", "R", "s1", Lc),
        ("d", "L", "s1", Ld),
        ("e", "L", "R", Le),
    ]
    return build_network(["s0", "L", "R", "s1"], edges, {"s0": 1.0, "s1": -1.0})


def fig2_graph() -> Network:
    """Unit-length path-decomposition example with P0=(e1), P1=(e2,e3,e4), P2=(e5,e6)."""
    edges = [
        ("e1", "s0", "s1", 1.0),
        ("e2", "s0", "u", 1.0),
        ("e3", "u", "v", 1.0),
        ("e4", "v", "s1", 1.0),
        ("e5", "u", "w", 1.0),
        ("e6", "w", "v", 1.0),
    ]
    return build_network(["s0", "u", "v", "w", "s1"], edges, {"s0": 1.0, "s1": -1.0})


def grid_graph(rows: int, cols: int, lengths: Mapping[tuple, float] | None = None, default: float = 1.0) -> Network:
    """rows x cols grid; nodes ``r{i}c{j}``, unit supply at the top-left corner."""
    name = lambda i, j: f"r{i}c{j}"  # noqa: E731
    nodes = [name(i, j) for i in range(rows) for j in range(cols)]
    edges = []
    for i in range(rows):
        for j in range(cols):
            for di, dj in ((0, 1), (1, 0)):
                a, b = (i, j), (i + di, j + dj)
                if b[0] < rows and b[1] < cols:
                    L = (lengths or {}).get((a, b), default)
                    edges.append((f"{name(*a)}-{name(*b)}", name(*a), name(*b), L))
    net = build_network(nodes, edges, {})
    return shortest_path_instance(net, name(0, 0), name(rows - 1, cols - 1))


def single_edge(length: float = 3.0) -> Network:
    return build_network(["s0", "s1"], [("e", "s0", "s1", length)], {"s0": 1.0, "s1": -1.0})


def replace_lengths(network: Network, lengths: Mapping[str, float]) -> Network:
    edges = [replace(e, length=float(lengths.get(e.id, e.length))) for e in network.edges]
    return build_network(network.nodes, edges, network.supplies, network.source_node)


def random_graph(
    rng: np.random.Generator,
    n: int,
    m: int,
    length_range: tuple[float, float] = (0.5, 3.0),
    parallel: bool = True,
) -> Network:
    """Random connected graph on ``v0..v{n-1}`` with a unit supply from ``v0`` to ``v{n-1}``.

    A random spanning tree is completed with ``m - n + 1`` extra edges; parallel
    edges are allowed unless ``parallel`` is false.
    """
    if n < 2 or m < n - 1:
        raise NetworkError("need n >= 2 and m >= n - 1 for a connected graph")
    if not parallel and m > n * (n - 1) // 2:
        raise NetworkError("too many edges for a simple graph")
    nodes = [f"v{i}" for i in range(n)]
    order = rng.permutation(n)
    pairs = [(int(order[i]), int(order[rng.integers(i)])) for i in range(1, n)]
    taken = {frozenset(p) for p in pairs}
    while len(pairs) < m:
        a, b = (int(x) for x in rng.choice(n, 2, replace=False))
        if parallel or frozenset((a, b)) not in taken:
            taken.add(frozenset((a, b)))
            pairs.append((a, b))
    lengths = rng.uniform(*length_range, m)
    edges = [(f"e{k}", nodes[a], nodes[b], float(L)) for k, ((a, b), L) in enumerate(zip(pairs, lengths))]
    return shortest_path_instance(build_network(nodes, edges, {}), nodes[0], nodes[-1])
