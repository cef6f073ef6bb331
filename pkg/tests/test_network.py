import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from physarum.network import (
    NetworkError,
    build_network,
    dump_network,
    fig2_graph,
    grid_graph,
    initial_diameters,
    parallel_links,
    parse_network,
    random_graph,
    shortest_path_instance,
    single_edge,
    wheatstone,
)


def doc(edges, supplies, nodes=None):
    nodes = nodes or sorted({x for e in edges for x in (e[1], e[2])})
    return {
        "nodes": nodes,
        "edges": [{"id": i, "u": u, "v": v, "length": L} for i, u, v, L in edges],
        "supplies": supplies,
    }


def test_single_edge_parses():
    net = parse_network(doc([("e", "s0", "s1", 3.0)], {"s0": 1, "s1": -1}))
    assert (net.n, net.m) == (2, 1)
    assert net.is_shortest_path and net.s0 == "s0" and net.s1 == "s1"


def test_parallel_edges_form_a_multigraph():
    net = parse_network(doc([("a", "s0", "s1", 1.0), ("b", "s0", "s1", 2.0)], {"s0": 1, "s1": -1}))
    assert net.m == 2
    assert net.edge("a").u == net.edge("b").u


def test_unbalanced_supplies_rejected():
    with pytest.raises(NetworkError, match="unbalanced"):
        parse_network(doc([("e", "s0", "s1", 1.0)], {"s0": 1, "s1": -0.5}))


@pytest.mark.parametrize("length", [0.0, -1.0, float("inf"), float("nan")])
def test_nonpositive_or_nonfinite_length_rejected(length):
    with pytest.raises(NetworkError):
        parse_network(doc([("e", "s0", "s1", length)], {"s0": 1, "s1": -1}))


def test_disconnected_graph_rejected():
    with pytest.raises(NetworkError, match="disconnected"):
        parse_network(doc([("e", "s0", "s1", 1.0), ("f", "x", "y", 1.0)], {"s0": 1, "s1": -1}))


@pytest.mark.parametrize(
    "text",
    ["{not json", "[]", json.dumps({"nodes": ["a"]}), json.dumps({"nodes": ["a", "b"], "edges": [{"id": "e"}]})],
)
def test_malformed_documents_rejected(text):
    with pytest.raises(NetworkError):
        parse_network(text)


def test_self_loop_and_duplicates_rejected():
    with pytest.raises(NetworkError, match="self-loop"):
        build_network(["a", "b"], [("e", "a", "b", 1.0), ("l", "a", "a", 1.0)], {})
    with pytest.raises(NetworkError, match="duplicate edge"):
        build_network(["a", "b"], [("e", "a", "b", 1.0), ("e", "a", "b", 2.0)], {})
    with pytest.raises(NetworkError, match="duplicate node"):
        build_network(["a", "a"], [("e", "a", "a", 1.0)], {})


def test_shorthand_supplies_make_a_unit_pair():
    net = parse_network(doc([("e", "x", "y", 2.0)], {"s0": "y", "s1": "x"}))
    assert net.s0 == "y" and net.s1 == "x"
    assert list(net.b) == [-1.0, 1.0]


def test_shortest_path_instance_wheatstone_and_grid():
    w = shortest_path_instance(wheatstone(), "s0", "s1")
    assert sorted(w.b) == [-1.0, 0.0, 0.0, 1.0]
    g = grid_graph(3, 4)
    assert (g.s0, g.s1) == ("r0c0", "r2c3")
    with pytest.raises(NetworkError):
        shortest_path_instance(wheatstone(), "s0", "s0")
    with pytest.raises(NetworkError):
        shortest_path_instance(wheatstone(), "s0", "nowhere")


def test_dead_edges_flagged():
    net = build_network(["s0", "s1", "x"], [("e", "s0", "s1", 1.0), ("p", "s1", "x", 1.0)], {"s0": 1, "s1": -1})
    assert net.dead_edges == frozenset({"p"})
    assert fig2_graph().dead_edges == frozenset()


def test_incidence_orientation():
    net = single_edge()
    assert net.incidence.tolist() == [[1.0, -1.0]]


def test_initial_diameter_forms():
    net = parallel_links([1.0, 2.0])
    assert initial_diameters(net).tolist() == [1.0, 1.0]
    assert initial_diameters(net, 0.5).tolist() == [0.5, 0.5]
    assert initial_diameters(net, {"uniform": 2}).tolist() == [2.0, 2.0]
    assert initial_diameters(net, {"e2": 3}).tolist() == [1.0, 3.0]
    a = initial_diameters(net, {"random": [0.5, 1.5], "seed": 4})
    assert np.array_equal(a, initial_diameters(net, {"random": [0.5, 1.5], "seed": 4}))
    assert np.all((a >= 0.5) & (a <= 1.5))
    with pytest.raises(NetworkError):
        initial_diameters(net, {"zz": 1.0})
    with pytest.raises(NetworkError):
        initial_diameters(net, -1.0)


@given(st.integers(0, 2**32 - 1), st.integers(2, 7), st.integers(0, 5))
def test_round_trip_and_length_bounds(seed, n, extra):
    net = random_graph(np.random.default_rng(seed), n, n - 1 + extra)
    again = parse_network(dump_network(net))
    assert again == net
    assert [e.length for e in again.edges] == [e.length for e in net.edges]
    assert dict(again.supplies) == dict(net.supplies)
    assert np.all(net.L_min <= net.lengths) and np.all(net.lengths <= net.L_max)


def test_random_graph_simple_mode_has_no_parallel_edges():
    net = random_graph(np.random.default_rng(3), 5, 10, parallel=False)
    pairs = [frozenset((e.u, e.v)) for e in net.edges]
    assert len(set(pairs)) == len(pairs) == 10
    with pytest.raises(NetworkError):
        random_graph(np.random.default_rng(0), 3, 4, parallel=False)
