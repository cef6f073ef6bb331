"""Electrical flows for a fixed diameter state.

Potentials solve the grounded weighted Laplacian system; flows follow from
Ohm's law, ``Q_e = D_e (p_u - p_v) / L_e`` for the edge's reference
orientation ``(u, v)``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .network import Network

CONSERVATION_TOL = 1e-9
MAX_REFINE = 3
# conductance spread beyond which the tree-basis solve is used
SCALE_SPLIT = 1e-9
SUPPLY_SNAP = 1e-12


class SolverError(RuntimeError):
    """The potential system could not be solved to tolerance."""


class EnumerationTooLarge(RuntimeError):
    """Exhaustive enumeration was refused by a size guard."""


@dataclass(frozen=True)
class DiameterState:
    D: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        D = np.asarray(self.D, dtype=float)
        if np.any(~np.isfinite(D)) or np.any(D <= 0):
            raise ValueError("diameters must be strictly positive and finite")
        object.__setattr__(self, "D", D)

    def resistance(self, network: Network) -> np.ndarray:
        return network.lengths / self.D

    def conductance(self, network: Network) -> np.ndarray:
        return self.D / network.lengths


@dataclass(frozen=True)
class ElectricalSolution:
    potentials: np.ndarray
    flows: np.ndarray
    residual: float
    network: Network

    def potential(self, node: str) -> float:
        return float(self.potentials[self.network.node_index[node]])

    def flow(self, edge_id: str) -> float:
        return float(self.flows[self.network.edge_index[edge_id]])

    @property
    def drop(self) -> float:
        """Source-sink potential difference.

        For shortest-path instances this is ``p_s0 - p_s1``; in general it is
        the spread ``max p - min p``, which coincides with it there.
        """
        return float(self.potentials.max() - self.potentials.min())

    @property
    def edge_drops(self) -> np.ndarray:
        return self.network.incidence @ self.potentials


class _TreeBasis:
    """Potentials parametrised by drops along a spanning tree rooted at the ground.

    ``p = P @ y`` where ``y_v = p_v - p_parent(v)``.  ``G = B @ P`` is an
    integer matrix, so ``G^T diag(cond) G`` is assembled without
    subtracting large conductances from small ones.
    """

    def __init__(self, network: Network, tree: tuple[int, ...], ground: int):
        n = network.n
        adj: dict[int, list[tuple[int, int]]] = {i: [] for i in range(n)}
        idx = network.node_index
        for k in tree:
            e = network.edges[k]
            a, b = idx[e.u], idx[e.v]
            adj[a].append((b, k))
            adj[b].append((a, k))
        parent = {ground: -1}
        order = [ground]
        for x in order:
            for y, _ in adj[x]:
                if y not in parent:
                    parent[y] = x
                    order.append(y)
        var = {v: j for j, v in enumerate(order[1:])}
        P = np.zeros((n, n - 1))
        for v in order[1:]:
            P[v] = P[parent[v]]
            P[v, var[v]] = 1.0
        self.P = P
        self.G = np.asarray(network.incidence) @ P


def _max_spanning_tree(network: Network, order: np.ndarray) -> tuple[int, ...]:
    """Kruskal over edge indices given in decreasing-conductance ``order``."""
    parent = list(range(network.n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    idx = network.node_index
    tree = []
    for k in order:
        e = network.edges[k]
        a, b = find(idx[e.u]), find(idx[e.v])
        if a != b:
            parent[a] = b
            tree.append(int(k))
            if len(tree) == network.n - 1:
                break
    return tuple(sorted(tree))


class LaplacianSolver:
    """Grounded Laplacian solve specialised to one network topology.

    Handles a single conductance vector or a stack of them (shape ``(B, m)``).
    Jacobi scaling keeps rows with tiny conductances accurate relative to
    their own scale.
    """

    def __init__(self, network: Network, ground: str | None = None):
        self.network = network
        self.ground = network.node_index[ground or network.ground]
        keep = [i for i in range(network.n) if i != self.ground]
        self.keep = np.array(keep, dtype=int)
        self.B = np.asarray(network.incidence)
        self.Br = self.B[:, self.keep]
        self.b = np.asarray(network.b)
        self.br = self.b[self.keep]
        self._bases: dict[tuple[int, ...], _TreeBasis] = {}
        self._by_order: dict[bytes, _TreeBasis] = {}

    def _basis(self, cond: np.ndarray) -> _TreeBasis:
        # the maximum spanning tree depends only on the conductance ordering
        order = np.argsort(-cond, kind="stable")
        key = order.tobytes()
        basis = self._by_order.get(key)
        if basis is None:
            tree = _max_spanning_tree(self.network, order)
            basis = self._bases.get(tree)
            if basis is None:
                basis = self._bases[tree] = _TreeBasis(self.network, tree, self.ground)
            if len(self._by_order) > 100_000:
                self._by_order.clear()
            self._by_order[key] = basis
        return basis

    def _multiscale(self, cond: np.ndarray, b: np.ndarray | None) -> tuple[np.ndarray, np.ndarray]:
        """Solve in the spanning-tree basis of the strongest edges.

        Returns potentials and edge drops; the drops come straight from the
        tree variables so they keep full precision even when the potentials
        are huge.
        """
        b = self.b if b is None else np.asarray(b, dtype=float)
        basis = self._basis(cond)
        G = basis.G
        A = G.T @ (cond[:, None] * G)
        rhs = basis.P.T @ b
        # subtree supplies at rounding level are exact zeros
        rhs[np.abs(rhs) <= SUPPLY_SNAP * max(1.0, float(np.abs(b).max()))] = 0.0
        s = 1.0 / np.sqrt(np.diagonal(A))
        As = A * s[:, None] * s[None, :]
        try:
            y = np.linalg.solve(As, rhs * s) * s
            for _ in range(MAX_REFINE):
                res = rhs - A @ y
                if np.all(np.abs(res) <= 1e-13 * np.abs(rhs).max() + 1e-300):
                    break
                y = y + np.linalg.solve(As, res * s) * s
        except np.linalg.LinAlgError as exc:
            raise SolverError(str(exc)) from exc
        return basis.P @ y, G @ y

    def potentials(self, cond: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
        cond = np.asarray(cond, dtype=float)
        spread = cond.min(axis=-1) < SCALE_SPLIT * cond.max(axis=-1)
        if cond.ndim == 1 and spread:
            return self._multiscale(cond, b)[0]
        if cond.ndim > 1 and np.any(spread):
            bb = None if b is None else np.broadcast_to(b, cond.shape[:-1] + (self.network.n,))
            p = np.empty(cond.shape[:-1] + (self.network.n,))
            calm = ~spread
            if np.any(calm):
                p[calm] = self.potentials(cond[calm], None if bb is None else bb[calm])
            for r in zip(*np.nonzero(spread)):
                p[r] = self._multiscale(cond[r], None if bb is None else bb[r])[0]
            return p
        br = self.br if b is None else np.asarray(b)[..., self.keep]
        Br = self.Br
        if cond.ndim == 1:
            A = Br.T @ (cond[:, None] * Br)
        else:
            A = np.einsum("ei,be,ej->bij", Br, cond, Br)
        diag = np.diagonal(A, axis1=-2, axis2=-1)
        s = 1.0 / np.sqrt(diag)
        As = A * s[..., :, None] * s[..., None, :]
        rhs = np.broadcast_to(br, diag.shape) * s
        try:
            y = np.linalg.solve(As, rhs[..., None])[..., 0]
        except np.linalg.LinAlgError as exc:
            raise SolverError(str(exc)) from exc
        pr = y * s
        for _ in range(MAX_REFINE):
            res = np.broadcast_to(br, pr.shape) - np.einsum("...ij,...j->...i", A, pr)
            if np.abs(res).max() <= 1e-13:
                break
            pr = pr + np.linalg.solve(As, (res * s)[..., None])[..., 0] * s
        p = np.zeros(cond.shape[:-1] + (self.network.n,))
        p[..., self.keep] = pr
        return p

    def flows(self, cond: np.ndarray, p: np.ndarray) -> np.ndarray:
        return cond * np.einsum("ei,...i->...e", self.B, p)

    def solve(self, D: np.ndarray, lengths: np.ndarray | None = None):
        """Return ``(potentials, flows)`` for diameters ``D`` (single or stacked)."""
        L = self.network.lengths if lengths is None else lengths
        cond = np.asarray(D) / L
        spread = cond.min(axis=-1) < SCALE_SPLIT * cond.max(axis=-1)
        if cond.ndim == 1 and spread:
            p, drops = self._multiscale(cond, None)
            return p, cond * drops
        if cond.ndim == 1 or not np.any(spread):
            p = self.potentials(cond)
            return p, self.flows(cond, p)
        p = np.empty(cond.shape[:-1] + (self.network.n,))
        Q = np.empty_like(cond)
        calm = ~spread
        if np.any(calm):
            p[calm] = self.potentials(cond[calm])
            Q[calm] = self.flows(cond[calm], p[calm])
        for r in zip(*np.nonzero(spread)):
            p[r], drops = self._multiscale(cond[r], None)
            Q[r] = cond[r] * drops
        return p, Q

    def residual(self, Q: np.ndarray) -> np.ndarray:
        """Max conservation violation ``|net outflow - b_v|`` per solution."""
        return np.abs(np.einsum("ei,...e->...i", self.B, Q) - self.b).max(axis=-1)


@lru_cache(maxsize=256)
def solver_for(network: Network) -> LaplacianSolver:
    return LaplacianSolver(network)


def solve_potentials(network: Network, state: DiameterState | np.ndarray) -> ElectricalSolution:
    """Node potentials (ground at the most negative supply) and edge flows."""
    D = state.D if isinstance(state, DiameterState) else np.asarray(state, dtype=float)
    if np.any(D <= 0) or not np.all(np.isfinite(D)):
        raise ValueError("diameters must be strictly positive and finite")
    solver = solver_for(network)
    p, Q = solver.solve(D)
    res = float(solver.residual(Q))
    scale = max(1.0, float(np.abs(network.b).max()))
    if not np.all(np.isfinite(p)) or res > CONSERVATION_TOL * scale:
        raise SolverError(f"conservation residual {res:.3e} exceeds tolerance")
    return ElectricalSolution(p, Q, res, network)


def energy(network: Network, state: DiameterState | np.ndarray, flows: np.ndarray) -> float:
    """Dissipated energy ``sum_e R_e x_e^2`` with ``R_e = L_e / D_e``."""
    D = state.D if isinstance(state, DiameterState) else np.asarray(state, dtype=float)
    x = np.asarray(flows, dtype=float)
    return float(np.sum(network.lengths / D * x * x))


def cycle_basis_flows(network: Network) -> np.ndarray:
    """Rows span the circulation space (kernel of the node-edge incidence)."""
    B = np.asarray(network.incidence)
    _, s, vt = np.linalg.svd(B.T)
    rank = int(np.sum(s > 1e-10 * s.max()))
    return vt[rank:]


# -- Kirchhoff's matrix-tree formula ------------------------------------------------

def spanning_tree_count(network: Network) -> float:
    B = np.asarray(network.incidence)
    lap = B.T @ B
    return float(round(np.linalg.det(lap[1:, 1:])))


def spanning_trees(network: Network, max_trees: int = 200_000):
    """Yield spanning trees as tuples of edge indices."""
    count = spanning_tree_count(network)
    if count > max_trees:
        raise EnumerationTooLarge(f"{count:.0f} spanning trees exceeds bound {max_trees}")
    n = network.n
    ends = [(network.node_index[e.u], network.node_index[e.v]) for e in network.edges]
    for combo in itertools.combinations(range(network.m), n - 1):
        parent = list(range(n))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        ok = True
        for k in combo:
            a, b = find(ends[k][0]), find(ends[k][1])
            if a == b:
                ok = False
                break
            parent[a] = b
        if ok:
            yield combo


def _tree_path(network: Network, tree, start: int, goal: int) -> list[tuple[int, int]]:
    """Edges on the tree path from ``start`` to ``goal`` as ``(edge, +1/-1)``."""
    adj: dict[int, list[tuple[int, int, int]]] = {}
    for k in tree:
        e = network.edges[k]
        a, b = network.node_index[e.u], network.node_index[e.v]
        adj.setdefault(a, []).append((b, k, +1))
        adj.setdefault(b, []).append((a, k, -1))
    prev: dict[int, tuple[int, int, int]] = {start: (-1, -1, 0)}
    stack = [start]
    while stack:
        x = stack.pop()
        for y, k, sgn in adj.get(x, []):
            if y not in prev:
                prev[y] = (x, k, sgn)
                stack.append(y)
    path = []
    x = goal
    while x != start:
        px, k, sgn = prev[x]
        path.append((k, sgn))
        x = px
    return path[::-1]


def matrix_tree_flow(network: Network, state: DiameterState | np.ndarray, max_trees: int = 200_000) -> np.ndarray:
    """Edge currents by spanning-tree enumeration.

    ``Q_uv = (Gamma(Sp(u,v)) - Gamma(Sp(v,u))) / Gamma(Sp)`` where ``Gamma``
    sums the conductance products of trees and ``Sp(u,v)`` holds trees whose
    ``s0 -> s1`` path uses ``(u, v)`` forwards.
    """
    D = state.D if isinstance(state, DiameterState) else np.asarray(state, dtype=float)
    cond = D / network.lengths
    s0, s1 = network.node_index[network.s0], network.node_index[network.s1]
    total = 0.0
    signed = np.zeros(network.m)
    for tree in spanning_trees(network, max_trees):
        w = float(np.prod(cond[list(tree)]))
        total += w
        for k, sgn in _tree_path(network, tree, s0, s1):
            signed[k] += sgn * w
    return signed / total
