"""Combinatorial oracles and post-processing of trajectories.

The path decomposition is computed in exact rational arithmetic
(``fractions.Fraction`` of the float lengths), so slope ties are detected
exactly rather than up to rounding.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .network import Network

DIST_RTOL = 1e-12


class DecompositionError(ValueError):
    """The greedy path decomposition is undefined for this instance."""


class UnreliableFit(ValueError):
    """A decay-rate fit window contains floor-clamped samples."""


# -- shortest paths ------------------------------------------------------------------

def dijkstra(network: Network, target: str, weights: Sequence | None = None) -> dict[str, object]:
    """Distances from every node to ``target``; works with floats or Fractions."""
    w = list(network.lengths) if weights is None else list(weights)
    adj: dict[str, list[tuple[str, object]]] = {v: [] for v in network.nodes}
    for k, e in enumerate(network.edges):
        adj[e.u].append((e.v, w[k]))
        adj[e.v].append((e.u, w[k]))
    zero = w[0] - w[0]
    dist = {target: zero}
    order = {v: i for i, v in enumerate(network.nodes)}
    heap = [(zero, order[target], target)]
    done = set()
    while heap:
        d, _, x = heapq.heappop(heap)
        if x in done:
            continue
        done.add(x)
        for y, wk in adj[x]:
            nd = d + wk
            if y not in dist or nd < dist[y]:
                dist[y] = nd
                heapq.heappush(heap, (nd, order[y], y))
    return dist


@dataclass(frozen=True)
class ShortestPathSummary:
    L_star: float
    dist: dict[str, float]
    G0: frozenset[str]
    unique: bool
    path: tuple[str, ...] | None
    path_nodes: tuple[str, ...] | None


def shortest_path_oracle(network: Network) -> ShortestPathSummary:
    s0, s1 = network.s0, network.s1
    to_s1 = dijkstra(network, s1)
    from_s0 = dijkstra(network, s0)
    L_star = float(to_s1[s0])
    tol = DIST_RTOL * max(L_star, 1.0)
    G0 = set()
    tight: dict[str, list[tuple[str, str]]] = {v: [] for v in network.nodes}
    for e in network.edges:
        for a, b in ((e.u, e.v), (e.v, e.u)):
            if abs(from_s0[a] + e.length + to_s1[b] - L_star) <= tol:
                G0.add(e.id)
                tight[a].append((b, e.id))
    # count s0 -> s1 paths in the tight DAG, processing nodes by distance to s1
    count = {v: 0 for v in network.nodes}
    count[s1] = 1
    for v in sorted(network.nodes, key=lambda x: to_s1[x]):
        if v != s1:
            count[v] = sum(count[b] for b, _ in tight[v])
    unique = count[s0] == 1
    path = nodes = None
    if unique:
        edges, nodes_ = [], [s0]
        x = s0
        while x != s1:
            b, eid = tight[x][0]
            edges.append(eid)
            nodes_.append(b)
            x = b
        path, nodes = tuple(edges), tuple(nodes_)
    return ShortestPathSummary(
        L_star, {v: float(d) for v, d in to_s1.items()}, frozenset(G0), unique, path, nodes
    )


# -- attraction -----------------------------------------------------------------------

@dataclass
class AttractionReport:
    t: np.ndarray
    mass_off_G0: np.ndarray
    value_deviation: np.ndarray
    drop_error: np.ndarray
    path_deviation: np.ndarray | None = None
    potential_error: np.ndarray | None = None

    def terminal(self) -> dict[str, float]:
        out = {
            "mass_off_G0": float(self.mass_off_G0[-1]),
            "value_deviation": float(self.value_deviation[-1]),
            "drop_error": float(self.drop_error[-1]),
        }
        if self.path_deviation is not None:
            out["path_deviation"] = float(self.path_deviation[-1])
            out["potential_error"] = float(self.potential_error[-1])
        return out


def attraction_metrics(trajectory, summary: ShortestPathSummary) -> AttractionReport:
    net = trajectory.network
    in_G0 = np.array([eid in summary.G0 for eid in net.edge_ids])
    D, Q, p = trajectory.D, trajectory.Q, trajectory.p
    mass_off = D[:, ~in_G0].sum(axis=1)
    s0, s1 = net.s0, net.s1
    # net outflow of s0 through G0 edges
    sign = np.array([1.0 if e.u == s0 else -1.0 if e.v == s0 else 0.0 for e in net.edges])
    value = (Q * (sign * in_G0)).sum(axis=1)
    drop = p[:, net.node_index[s0]] - p[:, net.node_index[s1]]
    rep = AttractionReport(trajectory.t, mass_off, np.abs(value - 1.0), np.abs(drop - summary.L_star))
    if summary.unique:
        ind = np.array([eid in summary.path for eid in net.edge_ids], dtype=float)
        rep.path_deviation = np.abs(D - ind).max(axis=1)
        idx = [net.node_index[v] for v in summary.path_nodes]
        target = np.array([summary.dist[v] for v in summary.path_nodes])
        rep.potential_error = np.abs(p[:, idx] - target).max(axis=1)
    return rep


# -- path decomposition ---------------------------------------------------------------

@dataclass
class PathDecomposition:
    paths: list[tuple[str, ...]]
    endpoints: list[tuple[str, str]]
    slopes: list[Fraction]
    i0: int
    potentials: dict[str, Fraction]
    rates: dict[str, Fraction]
    orientations: dict[str, tuple[str, str] | None]
    dead: list[str] = field(default_factory=list)

    @property
    def slope_values(self) -> list[float]:
        return [float(f) for f in self.slopes]

    def path_of(self, edge_id: str) -> int:
        for i, p in enumerate(self.paths):
            if edge_id in p:
                return i
        raise KeyError(edge_id)

    def slopes_ordered(self) -> bool:
        """Strictly decreasing positive slopes up to ``i0``, zero afterwards."""
        f = self.slopes
        head = f[: self.i0 + 1]
        return (
            all(x > 0 for x in head)
            and all(a > b for a, b in zip(head, head[1:]))
            and all(x == 0 for x in f[self.i0 + 1:])
        )

    def to_dict(self) -> dict:
        return {
            "paths": [list(p) for p in self.paths],
            "endpoints": [list(ab) for ab in self.endpoints],
            "slopes": [float(f) for f in self.slopes],
            "slopes_exact": [str(f) for f in self.slopes],
            "i0": self.i0,
            "potentials": {v: float(x) for v, x in self.potentials.items()},
            "rates": {e: float(r) for e, r in self.rates.items()},
            "orientations": {
                e: (f"{o[0]}->{o[1]}" if o else "horizontal") for e, o in self.orientations.items()
            },
            "dead_edges": list(self.dead),
        }


def _candidate_paths(network: Network, skeleton: set[str], used: set[str]):
    """Paths between distinct skeleton nodes, interior off the skeleton, edges unused."""
    adj: dict[str, list] = {v: [] for v in network.nodes}
    for e in network.edges:
        if e.id not in used:
            adj[e.u].append((e.v, e))
            adj[e.v].append((e.u, e))
    for a in network.nodes:
        if a not in skeleton:
            continue
        stack = [(a, (), (a,))]
        while stack:
            x, edges, nodes = stack.pop()
            for y, e in adj[x]:
                if e.id in edges:
                    continue
                if y in skeleton:
                    if y != a:
                        yield edges + (e.id,), nodes + (y,)
                elif y not in nodes:
                    stack.append((y, edges + (e.id,), nodes + (y,)))


def path_decomposition(network: Network, max_edges: int = 20) -> PathDecomposition:
    """Greedy slope-ordered decomposition into paths ``P_0 ... P_k``."""
    if network.m > max_edges:
        raise DecompositionError(f"{network.m} edges exceeds enumeration guard {max_edges}")
    summary = shortest_path_oracle(network)
    if not summary.unique:
        raise DecompositionError("shortest source-sink path is not unique")
    Lf = [Fraction(float(x)) for x in network.lengths]
    length = dict(zip(network.edge_ids, Lf))
    dist = dijkstra(network, network.s1, Lf)

    p0 = summary.path
    pot = {v: dist[v] for v in summary.path_nodes}
    paths = [p0]
    endpoints = [(network.s0, network.s1)]
    slopes = [Fraction(1)]
    rates = {e: Fraction(0) for e in p0}
    orient: dict[str, tuple[str, str] | None] = {}
    for e, a, b in zip(p0, summary.path_nodes, summary.path_nodes[1:]):
        orient[e] = (a, b)

    dead = sorted(network.dead_edges, key=network.edge_index.get)
    used = set(p0) | set(dead)
    skeleton = set(summary.path_nodes)
    while len(used) < network.m:
        best: dict[tuple[str, ...], tuple] = {}
        for edges, nodes in _candidate_paths(network, skeleton, used):
            a, b = nodes[0], nodes[-1]
            if pot[a] < pot[b]:
                continue
            f = (pot[a] - pot[b]) / sum(length[e] for e in edges)
            key = frozenset(edges)
            if f == 0:
                # undirected; keep one deterministic orientation
                rev = tuple(reversed(edges))
                if rev < edges:
                    edges, nodes = rev, tuple(reversed(nodes))
            cand = (f, edges, nodes)
            if key not in best or edges < best[key][1]:
                best[key] = cand
        if not best:
            raise DecompositionError(f"edges {sorted(set(network.edge_ids) - used)} are not covered")
        fmax = max(c[0] for c in best.values())
        top = sorted((c for c in best.values() if c[0] == fmax), key=lambda c: c[1])
        if fmax > 0 and len(top) > 1:
            raise DecompositionError(
                f"slope {fmax} attained by {len(top)} paths: {[c[1] for c in top]}"
            )
        f, edges, nodes = top[0]
        b = nodes[-1]
        # interior potentials by linear interpolation from the end point
        acc = Fraction(0)
        for e, v in zip(reversed(edges[1:]), reversed(nodes[1:-1])):
            acc += length[e]
            pot[v] = pot[b] + f * acc
        for e, x, y in zip(edges, nodes, nodes[1:]):
            rates[e] = f - 1
            orient[e] = (x, y) if f > 0 else None
        paths.append(edges)
        endpoints.append((nodes[0], b))
        slopes.append(f)
        used.update(edges)
        skeleton.update(nodes)

    for e in dead:
        rates[e] = Fraction(-1)
        orient[e] = None
    positive = [i for i, f in enumerate(slopes) if f > 0]
    i0 = max(positive)
    decomposition = PathDecomposition(paths, endpoints, slopes, i0, pot, rates, orient, dead)
    for v in network.nodes:
        pot.setdefault(v, Fraction(0))
    return decomposition


# -- decay rates and stabilisation ---------------------------------------------------

def decay_rate_fit(trajectory, edge: str, window: tuple[float, float]) -> float:
    """Least-squares slope of ``ln D_e(t)`` over ``window``."""
    t_a, t_b = window
    t = trajectory.t
    if t_a < t[0] - 1e-12 or t_b > t[-1] + 1e-12 or t_b <= t_a:
        raise ValueError(f"window {window} outside trajectory [{t[0]}, {t[-1]}]")
    mask = (t >= t_a - 1e-12) & (t <= t_b + 1e-12)
    D = trajectory.column(edge)[mask]
    floor = trajectory.config.diameter_floor
    if np.any(D <= floor * (1 + 1e-9)):
        raise UnreliableFit(f"edge {edge!r} hits the diameter floor inside {window}")
    slope, _ = np.polyfit(t[mask], np.log(D), 1)
    return float(slope)


@dataclass(frozen=True)
class EdgeStatus:
    kind: str  # "horizontal" | "directed" | "unstable"
    tail: str | None = None
    head: str | None = None

    def __str__(self) -> str:
        return f"{self.tail}->{self.head}" if self.kind == "directed" else self.kind


def classify_drops(drops: np.ndarray, eps_h: float) -> tuple[str, int]:
    """Classify a tail window of potential drops ``p_u - p_v``; returns (kind, sign)."""
    mag = np.abs(drops)
    if np.all(mag < eps_h):
        return "horizontal", 0
    sign = np.sign(drops)
    if np.all(mag >= eps_h) and np.all(sign == sign[0]):
        return "directed", int(sign[0])
    return "unstable", 0


def stabilization_classify(trajectory, eps_h: float | None = None, tail: float = 0.25) -> dict[str, EdgeStatus]:
    net = trajectory.network
    eps_h = 1e-3 * net.L_min if eps_h is None else eps_h
    t = trajectory.t
    start = t[-1] - tail * (t[-1] - t[0])
    window = t >= start
    drops = trajectory.p[window] @ np.asarray(net.incidence).T
    out = {}
    for k, e in enumerate(net.edges):
        kind, sign = classify_drops(drops[:, k], eps_h)
        if kind == "directed":
            out[e.id] = EdgeStatus(kind, *((e.u, e.v) if sign > 0 else (e.v, e.u)))
        else:
            out[e.id] = EdgeStatus(kind)
    return out


def path_log_weight(network: Network, D: np.ndarray, path: Sequence[str]) -> float:
    """``sum_{e in path} L_e ln D_e``."""
    idx = [network.edge_index[e] for e in path]
    return float(np.dot(network.lengths[idx], np.log(np.asarray(D)[idx])))
