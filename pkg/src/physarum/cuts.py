"""Cut capacities with edge capacities ``D_e``.

``min_cut`` finds the minimum s0-s1 cut by augmenting paths (BFS order);
``most_constraining_cut`` minimises ``C_S / |b_S|`` over non-trivial cuts by
exhaustive enumeration.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .electrical import EnumerationTooLarge
from .network import Network

ENUMERATION_BOUND = 16
TIE_RTOL = 1e-12


@dataclass(frozen=True)
class CutResult:
    side: frozenset[str]
    capacity: float
    imbalance: float
    ratio: float | None = None


def cut_capacity(network: Network, D: np.ndarray, side) -> float:
    side = set(side)
    D = np.asarray(D)
    return float(sum(D[k] for k, e in enumerate(network.edges) if (e.u in side) != (e.v in side)))


def max_flow(network: Network, D: np.ndarray, s: str, t: str) -> tuple[float, np.ndarray, frozenset[str]]:
    """Edmonds-Karp on the undirected network with capacities ``D``.

    Returns the flow value, a signed edge flow (relative to each edge's
    reference orientation) and the source side of the inclusion-minimal
    minimum cut (nodes reachable in the final residual graph).
    """
    D = np.asarray(D, dtype=float)
    idx = network.node_index
    n = network.n
    adj: list[list[int]] = [[] for _ in range(n)]
    # arc k: tail, head, residual; arcs 2j and 2j+1 are the two directions of edge j
    tail = []
    head = []
    res = []
    for j, e in enumerate(network.edges):
        a, b = idx[e.u], idx[e.v]
        for x, y in ((a, b), (b, a)):
            adj[x].append(len(tail))
            tail.append(x)
            head.append(y)
            res.append(float(D[j]))
    si, ti = idx[s], idx[t]
    value = 0.0
    while True:
        pred = [-1] * n
        pred[si] = -2
        q = deque([si])
        while q and pred[ti] == -1:
            x = q.popleft()
            for k in adj[x]:
                y = head[k]
                if pred[y] == -1 and res[k] > 0.0:
                    pred[y] = k
                    q.append(y)
        if pred[ti] == -1:
            break
        bottleneck = np.inf
        y = ti
        while y != si:
            k = pred[y]
            bottleneck = min(bottleneck, res[k])
            y = tail[k]
        y = ti
        while y != si:
            k = pred[y]
            res[k] -= bottleneck
            res[k ^ 1] += bottleneck
            y = tail[k]
        value += bottleneck
    reach = [i for i in range(n) if pred[i] != -1]
    flow = np.array([(D[j] - res[2 * j] + res[2 * j + 1] - D[j]) / 2.0 for j in range(network.m)])
    return value, flow, frozenset(network.nodes[i] for i in reach)


@lru_cache(maxsize=64)
def _st_cut_table(network: Network, s: str, t: str):
    """All s-t cuts in lexicographic order of sorted node indices."""
    others = [i for i in range(network.n) if network.nodes[i] not in (s, t)]
    if len(others) > ENUMERATION_BOUND:
        raise EnumerationTooLarge(f"{network.n} nodes exceeds enumeration bound")
    si = network.node_index[s]
    sides = []
    for mask in range(1 << len(others)):
        members = [si] + [others[k] for k in range(len(others)) if mask >> k & 1]
        sides.append(tuple(sorted(members)))
    sides.sort()
    return _table(network, sides)


@lru_cache(maxsize=64)
def _nontrivial_cut_table(network: Network, bound: int):
    n = network.n
    if n - 1 > bound:
        raise EnumerationTooLarge(f"{n} nodes exceeds enumeration bound {bound}")
    b = np.asarray(network.b)
    sides = []
    # each cut is listed once, by the side containing node 0
    for mask in range((1 << (n - 1)) - 1):
        members = (0,) + tuple(k + 1 for k in range(n - 1) if mask >> k & 1)
        if abs(b[list(members)].sum()) > 1e-12:
            sides.append(members)
    sides.sort()
    return _table(network, sides)


def _table(network: Network, sides):
    ends = np.array([(network.node_index[e.u], network.node_index[e.v]) for e in network.edges])
    member = np.zeros((len(sides), network.n), dtype=bool)
    for r, side in enumerate(sides):
        member[r, list(side)] = True
    M = (member[:, ends[:, 0]] != member[:, ends[:, 1]]).astype(float)
    bS = member.astype(float) @ np.asarray(network.b)
    M.setflags(write=False)
    bS.setflags(write=False)
    return sides, M, bS


def _first_min(values: np.ndarray) -> int:
    best = values.min()
    tol = TIE_RTOL * max(abs(best), 1e-300)
    return int(np.flatnonzero(values <= best + tol)[0])


def enumerate_min_cut(network: Network, D: np.ndarray) -> CutResult:
    sides, M, bS = _st_cut_table(network, network.s0, network.s1)
    caps = M @ np.asarray(D)
    k = _first_min(caps)
    return CutResult(frozenset(network.nodes[i] for i in sides[k]), float(caps[k]), float(bS[k]))


def min_cut(network: Network, D: np.ndarray, cross_check: bool = True) -> CutResult:
    """Minimum s0-s1 cut with capacities ``D``.

    The capacity comes from max-flow.  When the instance is small enough the
    enumeration cross-check also fixes the reported side to the
    lexicographically smallest minimiser.
    """
    D = np.asarray(D, dtype=float)
    s0, s1 = network.s0, network.s1
    value, _, side = max_flow(network, D, s0, s1)
    if cross_check and network.n - 2 <= ENUMERATION_BOUND:
        enum = enumerate_min_cut(network, D)
        if not np.isclose(enum.capacity, value, rtol=1e-9, atol=1e-12):
            raise ArithmeticError(f"max-flow {value!r} disagrees with enumeration {enum.capacity!r}")
        return enum
    return CutResult(side, cut_capacity(network, D, side), 1.0)


def min_cut_value(network: Network, D: np.ndarray) -> float:
    """Fast minimum cut capacity (enumeration table when small, else max-flow)."""
    if network.n - 2 <= 12:
        _, M, _ = _st_cut_table(network, network.s0, network.s1)
        return float((M @ np.asarray(D)).min())
    return max_flow(network, D, network.s0, network.s1)[0]


def most_constraining_cut(network: Network, D: np.ndarray, bound: int = ENUMERATION_BOUND) -> CutResult:
    """Non-trivial cut minimising ``F_S = C_S / |b_S|``."""
    sides, M, bS = _nontrivial_cut_table(network, bound)
    caps = M @ np.asarray(D, dtype=float)
    ratios = caps / np.abs(bS)
    k = _first_min(ratios)
    return CutResult(frozenset(network.nodes[i] for i in sides[k]), float(caps[k]), float(bS[k]), float(ratios[k]))


def constraint_value(network: Network, D: np.ndarray, bound: int = ENUMERATION_BOUND) -> float:
    """``F = min_S C_S / |b_S|`` over non-trivial cuts."""
    _, M, bS = _nontrivial_cut_table(network, bound)
    return float(((M @ np.asarray(D, dtype=float)) / np.abs(bS)).min())
