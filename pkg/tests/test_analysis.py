from fractions import Fraction

import networkx as nx
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from physarum.analysis import (
    DecompositionError,
    UnreliableFit,
    attraction_metrics,
    classify_drops,
    decay_rate_fit,
    dijkstra,
    path_decomposition,
    path_log_weight,
    shortest_path_oracle,
    stabilization_classify,
)
from physarum.dynamics import IntegratorConfig, integrate
from physarum.network import (
    build_network,
    fig2_graph,
    parallel_links,
    random_graph,
    shortest_path_instance,
    single_edge,
    wheatstone,
)


@pytest.fixture(scope="module")
def fig2_run():
    net = fig2_graph()
    return integrate(net, np.ones(net.m), IntegratorConfig(t_end=60.0, record_stride=10), monitors=False)


def test_oracle_single_edge():
    s = shortest_path_oracle(single_edge(3.0))
    assert (s.L_star, s.G0, s.unique, s.path) == (3.0, frozenset({"e"}), True, ("e",))


def test_oracle_parallel_tie():
    s = shortest_path_oracle(parallel_links([1.0, 1.0]))
    assert s.L_star == 1.0
    assert not s.unique
    assert s.G0 == frozenset({"e1", "e2"})
    assert s.path is None


def test_oracle_distances_on_fig2():
    s = shortest_path_oracle(fig2_graph())
    assert s.dist == {"s0": 1.0, "u": 2.0, "v": 1.0, "w": 2.0, "s1": 0.0}
    assert s.G0 == frozenset({"e1"})


@given(st.integers(0, 2**32 - 1), st.integers(2, 8), st.integers(0, 6))
def test_dijkstra_matches_networkx(seed, n, extra):
    net = random_graph(np.random.default_rng(seed), n, n - 1 + extra)
    g = nx.MultiGraph()
    for e in net.edges:
        g.add_edge(e.u, e.v, key=e.id, weight=e.length)
    ref = nx.single_source_dijkstra_path_length(g, net.s1)
    ours = dijkstra(net, net.s1)
    assert {v: float(d) for v, d in ours.items()} == pytest.approx(ref, rel=1e-12)


def test_fig2_decomposition_is_exact():
    dec = path_decomposition(fig2_graph())
    assert dec.slopes == [Fraction(1), Fraction(1, 3), Fraction(1, 6)]
    assert dec.i0 == 2
    assert dec.paths == [("e1",), ("e2", "e3", "e4"), ("e5", "e6")]
    assert (dec.potentials["u"], dec.potentials["v"], dec.potentials["w"]) == (
        Fraction(2, 3),
        Fraction(1, 3),
        Fraction(1, 2),
    )
    assert dec.rates["e3"] == Fraction(-2, 3) and dec.rates["e6"] == Fraction(-5, 6)
    assert dec.orientations["e5"] == ("u", "w")
    assert dec.slopes_ordered()


def test_fig2_quarter_slope_candidate_not_selected():
    dec = path_decomposition(fig2_graph())
    assert ("e2", "e5", "e6", "e4") not in dec.paths
    assert Fraction(1, 4) not in dec.slopes


def test_single_edge_decomposition():
    dec = path_decomposition(single_edge())
    assert dec.paths == [("e",)] and dec.i0 == 0
    assert all(r == 0 for r in dec.rates.values())


def test_bridge_decompositions():
    net = shortest_path_instance(wheatstone(1.0, 2.0, 2.0, 1.0, 1.0), "s0", "s1")
    with pytest.raises(DecompositionError):
        path_decomposition(net)
    # a strictly shorter a-c route; b-d then puts L at the same potential as R
    net = shortest_path_instance(wheatstone(1.0, 2.0, 1.0, 2.0, 1.0), "s0", "s1")
    dec = path_decomposition(net)
    assert dec.paths == [("a", "c"), ("b", "d"), ("e",)]
    assert dec.slopes == [1, Fraction(1, 2), 0]
    assert dec.i0 == 1
    assert dec.orientations["e"] is None and dec.rates["e"] == -1


def test_dead_edge_rate():
    net = build_network(["s0", "s1", "x"], [("e", "s0", "s1", 1.0), ("p", "s1", "x", 1.0)], {"s0": 1, "s1": -1})
    dec = path_decomposition(net)
    assert dec.rates["p"] == -1 and dec.orientations["p"] is None


def test_non_unique_shortest_path_is_an_error():
    with pytest.raises(DecompositionError, match="not unique"):
        path_decomposition(parallel_links([1.0, 1.0]))


def test_edge_guard():
    with pytest.raises(DecompositionError, match="guard"):
        path_decomposition(parallel_links([1.0 + k for k in range(21)]))


@given(st.integers(0, 2**32 - 1), st.integers(3, 7), st.integers(1, 5))
def test_decomposition_structure(seed, n, extra):
    net = random_graph(np.random.default_rng(seed), n, n - 1 + extra)
    try:
        dec = path_decomposition(net)
    except DecompositionError:
        return
    covered = [e for p in dec.paths for e in p] + dec.dead
    assert sorted(covered) == sorted(net.edge_ids)
    assert dec.slopes_ordered()
    assert all(-1 <= r <= 0 for r in dec.rates.values())
    for i, path in enumerate(dec.paths):
        for e in path:
            assert dec.rates[e] == dec.slopes[i] - 1


def test_fig2_decay_fits(fig2_run):
    for edge in ("e2", "e3", "e4"):
        assert decay_rate_fit(fig2_run, edge, (30.0, 60.0)) == pytest.approx(-2 / 3, abs=0.05)
    for edge in ("e5", "e6"):
        assert decay_rate_fit(fig2_run, edge, (30.0, 60.0)) == pytest.approx(-5 / 6, abs=0.05)
    assert decay_rate_fit(fig2_run, "e1", (30.0, 60.0)) == pytest.approx(0.0, abs=1e-6)


def test_horizontal_edge_decays_at_unit_rate():
    net = shortest_path_instance(wheatstone(), "s0", "s1")
    traj = integrate(net, np.ones(5), IntegratorConfig(t_end=20.0, record_stride=10), monitors=False)
    assert decay_rate_fit(traj, "e", (5.0, 20.0)) == pytest.approx(-1.0, abs=1e-6)
    assert stabilization_classify(traj)["e"].kind == "horizontal"


def test_decay_fit_window_checks(fig2_run):
    with pytest.raises(ValueError):
        decay_rate_fit(fig2_run, "e2", (30.0, 80.0))
    net = single_edge()
    traj = integrate(net, np.array([1e-300]), IntegratorConfig(t_end=0.5), monitors=False)
    with pytest.raises(UnreliableFit):
        decay_rate_fit(traj, "e", (0.0, 0.5))


def test_fig2_classification_follows_decomposition(fig2_run):
    dec = path_decomposition(fig2_graph())
    status = stabilization_classify(fig2_run)
    for e, orient in dec.orientations.items():
        assert status[e].kind == "directed"
        assert (status[e].tail, status[e].head) == orient


def test_single_edge_classification():
    traj = integrate(single_edge(), np.array([2.0]), IntegratorConfig(t_end=5.0), monitors=False)
    assert str(stabilization_classify(traj)["e"]) == "s0->s1"


def test_classify_drops():
    assert classify_drops(np.array([1e-5, -1e-5]), 1e-3) == ("horizontal", 0)
    assert classify_drops(np.array([-0.5, -0.4]), 1e-3) == ("directed", -1)
    assert classify_drops(np.array([0.5, -0.4]), 1e-3) == ("unstable", 0)
    assert classify_drops(np.array([0.5, 1e-6]), 1e-3) == ("unstable", 0)


def test_attraction_metrics(fig2_run):
    rep = attraction_metrics(fig2_run, shortest_path_oracle(fig2_graph()))
    assert all(v <= 1e-3 for v in rep.terminal().values())
    at_eq = fig2_run.D[-1:]
    assert rep.mass_off_G0[-1] == pytest.approx(at_eq[0, 1:].sum())


def test_attraction_zero_at_equilibrium():
    net = single_edge(2.0)
    traj = integrate(net, np.array([1.0]), IntegratorConfig(t_end=1.0), monitors=False)
    rep = attraction_metrics(traj, shortest_path_oracle(net))
    assert max(rep.terminal().values()) < 1e-12


def test_path_log_weight():
    assert path_log_weight(fig2_graph(), np.ones(6), ["e2", "e3"]) == 0.0
    assert path_log_weight(single_edge(2.0), np.array([np.e]), ["e"]) == pytest.approx(2.0)
