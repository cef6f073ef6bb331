"""Write the scenario corpus used by `physarum verify` and criteria 4 and 5.

Expected annotations come from oracles that share no code with the package:
networkx Dijkstra for shortest-path lengths and uniqueness, scipy's linprog
for transportation costs.  The package is only used to select random graphs
whose decay rates are fast enough to converge by t=60.

    python3 scripts/make_corpus.py [--out corpus] [--seed 0]
"""

from __future__ import annotations

import argparse
import json
import logging
from pathlib import Path

import networkx as nx
import numpy as np
from scipy.optimize import linprog

from physarum.analysis import path_decomposition
from physarum.network import random_graph
from physarum.transportation import random_instance

SP_CONFIG = {"method": "rk4", "dt": 0.01, "t_end": 60.0, "record_stride": 10}
TRANSPORT_CONFIG = {"method": "rk4", "dt": 0.025, "t_end": 150.0, "record_stride": 20}
# slowest admissible decay of an off-path edge for the random graphs
RATE_GAP = -0.2
TWICE_CHANGING_L = (2.3105573598345504, 4.6845729836377386, 2.6045021935447363, 3.9130698958846355, 1.0801099669046121)
TWICE_CHANGING_D0 = (0.18198566321538925, 36.929424356522524, 0.0037261823401319697, 1.5650577018676985, 0.005203019959687045)


def edges_doc(edges):
    return [{"id": k, "u": u, "v": v, "length": float(L)} for k, u, v, L in edges]


def sp_oracle(edges, s0, s1):
    """(L*, unique) from networkx distances and a path count over tight edges."""
    g = nx.MultiGraph()
    for k, u, v, L in edges:
        g.add_edge(u, v, key=k, weight=L)
    d0 = nx.single_source_dijkstra_path_length(g, s0)
    d1 = nx.single_source_dijkstra_path_length(g, s1)
    L_star = d0[s1]
    tight = []
    for k, u, v, L in edges:
        for a, b in ((u, v), (v, u)):
            if abs(d0[a] + L + d1[b] - L_star) <= 1e-12 * max(1.0, L_star):
                tight.append((a, b))
    count = {s0: 1}
    for x in sorted(d0, key=d0.get):
        for a, b in tight:
            if a == x:
                count[b] = count.get(b, 0) + count.get(a, 0)
    return float(L_star), count.get(s1, 0) == 1


def lp_cost(nodes, edges, supplies):
    idx = {v: i for i, v in enumerate(nodes)}
    A = np.zeros((len(nodes), len(edges)))
    for j, (_, u, v, _) in enumerate(edges):
        A[idx[u], j] = 1.0
        A[idx[v], j] = -1.0
    b = np.array([supplies.get(v, 0.0) for v in nodes])
    c = np.array([L for *_, L in edges])
    res = linprog(np.concatenate([c, c]), A_eq=np.hstack([A, -A]), b_eq=b, bounds=(0, None), method="highs")
    if res.status != 0:
        raise RuntimeError(res.message)
    return float(res.fun)


def sp_scenario(sid, nodes, edges, s0, s1, doc=None, expected=None, **extra):
    L_star, unique = sp_oracle(edges, s0, s1)
    exp = {"L_star": L_star, "unique_shortest_path": unique}
    if unique:
        exp["converges"] = True
    exp.update(expected or {})
    out = {
        "id": sid,
        "nodes": list(nodes),
        "edges": edges_doc(edges),
        "supplies": {"s0": s0, "s1": s1},
        "integrator": dict(SP_CONFIG),
        "expected": exp,
    }
    out.update(doc or {})
    out.update(extra)
    return out


def transport_scenario(sid, nodes, edges, supplies, anchor, expected=None):
    exp = {"oracle_cost": lp_cost(nodes, edges, supplies), "converges": True}
    exp.update(expected or {})
    return {
        "id": sid,
        "nodes": list(nodes),
        "edges": edges_doc(edges),
        "supplies": supplies,
        "anchor": anchor,
        "integrator": dict(TRANSPORT_CONFIG),
        "expected": exp,
    }


def net_edges(net):
    return [(e.id, e.u, e.v, e.length) for e in net.edges]


def build(seed: int) -> list[dict]:
    rng = np.random.default_rng(seed)
    docs = []
    one = [("e", "s0", "s1", 3.0)]
    docs.append(sp_scenario("single_edge", ["s0", "s1"], one, "s0", "s1",
                            {"initial_diameters": 2.0}, {"closed_form": "single_edge"}))
    docs.append(sp_scenario("single_edge_thin", ["s0", "s1"], [("e", "s0", "s1", 0.4)], "s0", "s1",
                            {"initial_diameters": 0.05}, {"closed_form": "single_edge"}))

    for sid, lengths, d0 in (
        ("parallel_three", (1.0, 2.0, 3.5), {"random": [0.1, 3.0], "seed": 11}),
        ("parallel_four", (0.8, 1.1, 1.6, 2.5), 1.0),
        ("parallel_tie", (1.0, 1.0, 2.0), {"e1": 0.5, "e2": 1.5, "e3": 1.0}),
    ):
        edges = [(f"e{i + 1}", "s0", "s1", L) for i, L in enumerate(lengths)]
        docs.append(sp_scenario(sid, ["s0", "s1"], edges, "s0", "s1",
                                {"initial_diameters": d0}, {"closed_form": "parallel_links"}))

    fig2 = [("e1", "s0", "s1", 1.0), ("e2", "s0", "u", 1.0), ("e3", "u", "v", 1.0),
            ("e4", "v", "s1", 1.0), ("e5", "u", "w", 1.0), ("e6", "w", "v", 1.0)]
    fig2_nodes = ["s0", "u", "v", "w", "s1"]
    slopes = {"slopes": ["1", "1/3", "1/6"], "decay_window": [30.0, 60.0]}
    docs.append(sp_scenario("fig2_uniform", fig2_nodes, fig2, "s0", "s1", {"initial_diameters": 1.0}, slopes))
    docs.append(sp_scenario("fig2_random", fig2_nodes, fig2, "s0", "s1",
                            {"initial_diameters": {"random": [0.5, 2.0], "seed": 3}}, slopes))
    pendant = fig2 + [("x1", "u", "x", 0.7)]
    docs.append(sp_scenario("dead_edge", fig2_nodes + ["x"], pendant, "s0", "s1", {"initial_diameters": 1.0}))

    docs.append(sp_scenario("triangle", ["s0", "m", "s1"],
                            [("direct", "s0", "s1", 2.5), ("up", "s0", "m", 1.0), ("down", "m", "s1", 1.0)],
                            "s0", "s1", {"initial_diameters": 1.0}))

    name = lambda i, j: f"r{i}c{j}"  # noqa: E731
    stair = {((i, i), (i, i + 1)) for i in range(4)} | {((i, i + 1), (i + 1, i + 1)) for i in range(4)}
    grid_edges = []
    for i in range(5):
        for j in range(5):
            for di, dj in ((0, 1), (1, 0)):
                a, b = (i, j), (i + di, j + dj)
                if b[0] < 5 and b[1] < 5:
                    L = 1.0 if (a, b) in stair else float(rng.uniform(2.0, 4.0))
                    grid_edges.append((f"{name(*a)}-{name(*b)}", name(*a), name(*b), L))
    docs.append(sp_scenario("grid_5x5_staircase", [name(i, j) for i in range(5) for j in range(5)],
                            grid_edges, name(0, 0), name(4, 4), {"initial_diameters": 1.0}))

    made = 0
    while made < 4:
        n = int(rng.integers(5, 8))
        net = random_graph(rng, n, int(rng.integers(n + 1, n + 4)), length_range=(0.5, 3.0))
        edges = net_edges(net)
        L_star, unique = sp_oracle(edges, net.s0, net.s1)
        if not unique or net.m > 20:
            continue
        dec = path_decomposition(net)
        if max(float(r) for eid, r in dec.rates.items() if r != 0) > RATE_GAP:
            continue
        made += 1
        docs.append(sp_scenario(f"random_sparse_{made}", net.nodes, edges, net.s0, net.s1,
                                {"initial_diameters": {"random": [0.5, 2.0], "seed": made}}))

    wnodes = ["s0", "L", "R", "s1"]

    def wedges(La, Lb, Lc, Ld, Le):
        return [("a", "s0", "R", La), ("b", "s0", "L", Lb), ("c", "R", "s1", Lc), ("d", "L", "s1", Ld), ("e", "L", "R", Le)]

    docs.append(sp_scenario("wheatstone_balanced", wnodes, wedges(1, 1, 1, 1, 1), "s0", "s1",
                            {"initial_diameters": 1.0}, {"middle_edge": "horizontal"}, kind="wheatstone"))
    docs.append(sp_scenario("wheatstone_asymmetric", wnodes, wedges(1.0, 1.5, 1.0, 1.0, 1.2), "s0", "s1",
                            {"initial_diameters": {"random": [0.2, 2.0], "seed": 5}}, kind="wheatstone"))
    docs.append(sp_scenario("wheatstone_through_middle", wnodes, wedges(1.0, 3.0, 3.0, 1.0, 0.5), "s0", "s1",
                            {"initial_diameters": 1.0}, kind="wheatstone"))
    docs.append(sp_scenario("wheatstone_twice_changing", wnodes, wedges(*TWICE_CHANGING_L), "s0", "s1",
                            {"initial_diameters": dict(zip("abcde", TWICE_CHANGING_D0))},
                            {"min_changes": 2}, kind="wheatstone"))

    docs.append(transport_scenario("transport_star", ["c", "x", "y"], [("cx", "c", "x", 1.0), ("cy", "c", "y", 1.0)],
                                   {"c": 2.0, "x": -1.0, "y": -1.0}, "c", {"tie": False}))
    docs.append(transport_scenario("transport_triangle", ["p", "q", "m"],
                                   [("direct", "p", "q", 5.0), ("pm", "p", "m", 1.0), ("mq", "m", "q", 1.0)],
                                   {"p": 1.0, "q": -1.0}, "p", {"tie": False}))
    docs.append(transport_scenario("transport_tie", ["a", "b", "c", "d"],
                                   [("ab", "a", "b", 1.0), ("bd", "b", "d", 1.0), ("ac", "a", "c", 1.0), ("cd", "c", "d", 1.0)],
                                   {"a": 0.6, "b": -0.1, "c": -0.1, "d": -0.4}, "a", {"tie": True}))
    for k in range(3):
        net = random_instance(rng, n=int(rng.integers(4, 7)), extra_edges=int(rng.integers(1, 4)))
        docs.append(transport_scenario(f"transport_random_{k + 1}", net.nodes, net_edges(net),
                                       dict(net.supplies), net.nodes[0], {"tie": False}))
    return docs


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="corpus")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    logging.disable(logging.WARNING)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for doc in build(args.seed):
        (out / f"{doc['id']}.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        print(doc["id"], json.dumps(doc["expected"], sort_keys=True))


if __name__ == "__main__":
    main()
