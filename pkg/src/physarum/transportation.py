"""Uncapacitated transportation: instance extension, equilibria and an exact oracle.

The dynamics run on an extended network: a new source node with supply 1
is joined to an anchor node whose supply drops by 1.  The new edge carries
unit flow at all times, so the flows on the original edges still meet the
original supplies.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .electrical import spanning_trees
from .network import Edge, Network, NetworkError, build_network

AUX_LENGTH = 1.0
SUPPORT_TOL = 1e-4
COST_TIE_TOL = 1e-9


@dataclass(frozen=True)
class TransportationInstance:
    base: Network
    extended: Network
    anchor: str
    aux_node: str
    aux_edge: str

    @property
    def base_edges(self) -> np.ndarray:
        """Column indices of the original edges inside the extended network."""
        idx = self.extended.edge_index
        return np.array([idx[e] for e in self.base.edge_ids], dtype=int)

    def base_flows(self, Q: np.ndarray) -> np.ndarray:
        return np.asarray(Q)[..., self.base_edges]

    def cost(self, Q: np.ndarray) -> np.ndarray | float:
        """``sum_e L_e |Q_e|`` over the original edges."""
        c = np.abs(self.base_flows(Q)) @ self.base.lengths
        return float(c) if np.ndim(c) == 0 else c


def _fresh(name: str, taken) -> str:
    out, k = name, 1
    while out in taken:
        out = f"{name}{k}"
        k += 1
    return out


def build_instance(network: Network, anchor: str, aux_length: float = AUX_LENGTH) -> TransportationInstance:
    if anchor not in network.node_index:
        raise NetworkError(f"unknown anchor {anchor!r}")
    if abs(float(np.sum(network.b))) > 1e-9:
        raise NetworkError("unbalanced supplies")
    aux = _fresh("s0", set(network.nodes))
    aux_edge = _fresh("aux", set(network.edge_ids))
    supplies = dict(network.supplies)
    supplies[anchor] = supplies.get(anchor, 0.0) - 1.0
    supplies[aux] = 1.0
    extended = build_network(
        (aux, *network.nodes),
        (Edge(aux_edge, aux, anchor, aux_length), *network.edges),
        supplies,
        source_node=aux,
    )
    return TransportationInstance(network, extended, anchor, aux, aux_edge)


# -- equilibria ----------------------------------------------------------------------

@dataclass(frozen=True)
class EquilibriumCheck:
    residual: float
    equal_length_violation: float
    is_tree: bool
    support: tuple[str, ...]

    def is_equilibrium(self, tol: float = 1e-6) -> bool:
        return self.residual <= tol and self.equal_length_violation <= tol


def _is_forest(network: Network, edge_ids) -> bool:
    parent = {v: v for v in network.nodes}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for eid in edge_ids:
        e = network.edge(eid)
        a, b = find(e.u), find(e.v)
        if a == b:
            return False
        parent[a] = b
    return True


def equal_length_check(network: Network, D: np.ndarray, Q: np.ndarray, tol: float = SUPPORT_TOL) -> EquilibriumCheck:
    """Residual and equal-length discrepancy of the positive-flow subnetwork.

    Support edges are oriented along their flow.  For every ordered node
    pair the longest and shortest directed path lengths are compared; the
    orientation is acyclic for potential-driven flows, so both come from a
    topological sweep.
    """
    D = np.asarray(D, dtype=float)
    Q = np.asarray(Q, dtype=float)
    residual = float(np.max(np.abs(D - np.abs(Q))))
    arcs = []
    support = []
    for k, e in enumerate(network.edges):
        if abs(Q[k]) > tol:
            support.append(e.id)
            arcs.append((e.u, e.v, e.length) if Q[k] > 0 else (e.v, e.u, e.length))
    out: dict[str, list[tuple[str, float]]] = {v: [] for v in network.nodes}
    indeg = {v: 0 for v in network.nodes}
    for a, b, length in arcs:
        out[a].append((b, length))
        indeg[b] += 1
    order = []
    ready = [v for v in network.nodes if indeg[v] == 0]
    while ready:
        x = ready.pop()
        order.append(x)
        for y, _ in out[x]:
            indeg[y] -= 1
            if indeg[y] == 0:
                ready.append(y)
    if len(order) != network.n:
        raise ValueError("flow support contains a directed cycle")
    worst = 0.0
    for src in network.nodes:
        lo = {src: 0.0}
        hi = {src: 0.0}
        for x in order:
            if x not in lo:
                continue
            for y, length in out[x]:
                lo[y] = min(lo.get(y, np.inf), lo[x] + length)
                hi[y] = max(hi.get(y, -np.inf), hi[x] + length)
        worst = max(worst, max(hi[v] - lo[v] for v in lo))
    return EquilibriumCheck(residual, worst, _is_forest(network, support), tuple(support))


def forest_settled(network: Network, tol: float = SUPPORT_TOL):
    """Stopping rule for :func:`integrate`: the state sits at a forest-supported equilibrium.

    True once edges with ``D_e >= tol`` form a forest, the remaining
    hardware ``sum L_e D_e`` is at most ``tol`` and ``max |D_e - |Q_e|| <= tol``.
    Uses no oracle, so the terminal cost can still disagree with the optimum.
    """
    lengths = network.lengths
    ids = network.edge_ids

    def done(D, p, Q) -> bool:
        if np.max(np.abs(D - np.abs(Q))) > tol:
            return False
        small = D < tol
        if float(lengths[small] @ D[small]) > tol:
            return False
        return _is_forest(network, [ids[k] for k in np.flatnonzero(~small)])

    return done


# -- exact oracle ---------------------------------------------------------------------

@dataclass
class OracleResult:
    flow: np.ndarray
    cost: float
    tree: tuple[str, ...]
    equilibria: list[tuple[float, np.ndarray]] = field(default_factory=list)
    tie: bool = False
    runner_up_gap: float = np.inf


def tree_flow(network: Network, tree) -> np.ndarray:
    """Unique flow supported on the spanning tree ``tree`` (edge indices) meeting ``b``."""
    B = np.asarray(network.incidence)[list(tree)]  # (n-1, n)
    # net outflow B^T F = b; drop the last node's (redundant) row
    F = np.linalg.solve(B.T[:-1], np.asarray(network.b)[:-1])
    flow = np.zeros(network.m)
    flow[list(tree)] = F
    return flow


def min_cost_oracle(instance: TransportationInstance | Network, max_trees: int = 200_000) -> OracleResult:
    """Exact optimum of the uncapacitated problem by spanning-tree enumeration.

    Basic solutions of the uncapacitated problem are tree-induced flows, so
    the optimum is attained on one of them.  Distinct tree flows are also the
    forest-supported equilibria of the dynamics; cost ties among them are
    flagged.
    """
    net = instance.base if isinstance(instance, TransportationInstance) else instance
    if not np.any(np.asarray(net.b)):
        raise ValueError("no supplies: nothing to transport")
    seen: dict[tuple, tuple[float, np.ndarray, tuple]] = {}
    for tree in spanning_trees(net, max_trees):
        F = tree_flow(net, tree)
        F[np.abs(F) < 1e-12] = 0.0
        key = tuple(np.round(F, 10))
        if key not in seen:
            cost = float(np.abs(F) @ net.lengths)
            seen[key] = (cost, F, tuple(net.edge_ids[k] for k in tree))
    ranked = sorted(seen.values(), key=lambda c: c[0])
    cost, flow, tree = ranked[0]
    costs = np.array([c[0] for c in ranked])
    gaps = np.diff(costs)
    tie = bool(np.any(gaps <= COST_TIE_TOL * max(1.0, abs(cost))))
    gap = float(costs[1] - costs[0]) if len(costs) > 1 else np.inf
    return OracleResult(flow, cost, tree, [(c, f) for c, f, _ in ranked], tie, gap)


# -- convergence report ---------------------------------------------------------------

@dataclass
class TransportReport:
    terminal_cost: float
    oracle_cost: float
    gap: float
    residual: np.ndarray
    aux_flow_error: float
    tie: bool
    terminal_residual: float

    def passed(self, cost_tol: float = 1e-3, aux_tol: float = 1e-9) -> bool:
        if self.aux_flow_error > aux_tol:
            return False
        # with tied equilibria the optimum is not guaranteed
        return self.tie or self.gap <= cost_tol

    def to_dict(self) -> dict:
        return {
            "terminal_cost": self.terminal_cost,
            "oracle_cost": self.oracle_cost,
            "gap": self.gap,
            "terminal_residual": self.terminal_residual,
            "residual_curve": [float(x) for x in self.residual],
            "aux_flow_error": self.aux_flow_error,
            "tie_flag": self.tie,
            "optimum_asserted": not self.tie,
        }


def transport_convergence_report(trajectory, instance: TransportationInstance, oracle: OracleResult) -> TransportReport:
    Q = trajectory.Q
    residual = np.max(np.abs(trajectory.D - np.abs(Q)), axis=1)
    aux = Q[:, instance.extended.edge_index[instance.aux_edge]]
    e = instance.extended.edge(instance.aux_edge)
    # reference orientation is aux -> anchor
    sign = 1.0 if e.u == instance.aux_node else -1.0
    terminal = instance.cost(Q[-1])
    return TransportReport(
        terminal_cost=terminal,
        oracle_cost=oracle.cost,
        gap=abs(terminal - oracle.cost),
        residual=residual,
        aux_flow_error=float(np.max(np.abs(sign * aux - 1.0))),
        tie=oracle.tie,
        terminal_residual=float(residual[-1]),
    )


def random_instance(rng: np.random.Generator, n: int = 6, extra_edges: int = 3, supply_nodes: int = 3) -> Network:
    """Connected random graph with distinct random lengths and balanced random supplies."""
    nodes = [f"v{i}" for i in range(n)]
    pairs = set()
    edges = []
    order = rng.permutation(n)
    for i in range(1, n):
        a, b = nodes[order[i]], nodes[order[rng.integers(i)]]
        pairs.add(frozenset((a, b)))
        edges.append((a, b))
    # simple graph: extras are capped by the free node pairs
    extra_edges = min(extra_edges, n * (n - 1) // 2 - (n - 1))
    while len(edges) < n - 1 + extra_edges:
        a, b = rng.choice(n, 2, replace=False)
        key = frozenset((nodes[a], nodes[b]))
        if key not in pairs:
            pairs.add(key)
            edges.append((nodes[a], nodes[b]))
    lengths = rng.uniform(0.5, 3.0, len(edges))
    chosen = rng.choice(n, supply_nodes, replace=False)
    values = rng.uniform(-1.0, 1.0, supply_nodes)
    values -= values.mean()
    supplies = {nodes[k]: float(v) for k, v in zip(chosen, values)}
    return build_network(
        nodes,
        [(f"e{k}", a, b, float(L)) for k, ((a, b), L) in enumerate(zip(edges, lengths))],
        supplies,
    )
