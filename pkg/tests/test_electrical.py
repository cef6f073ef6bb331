import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from physarum.cuts import cut_capacity
from physarum.electrical import (
    DiameterState,
    LaplacianSolver,
    cycle_basis_flows,
    energy,
    matrix_tree_flow,
    solve_potentials,
    spanning_tree_count,
)
from physarum.network import (
    build_network,
    fig2_graph,
    parallel_links,
    random_graph,
    shortest_path_instance,
    single_edge,
    wheatstone,
)

positive = st.floats(0.05, 20.0)


def test_single_edge_drop_and_current():
    net = single_edge(3.0)
    sol = solve_potentials(net, [1.0])
    assert sol.drop == pytest.approx(3.0, abs=1e-12)
    assert sol.flow("e") == pytest.approx(1.0, abs=1e-12)
    assert energy(net, [1.0], sol.flows) == pytest.approx(3.0, abs=1e-12)
    assert sol.potential(net.s1) == 0.0


def test_two_unit_parallel_links():
    net = parallel_links([1.0, 1.0])
    sol = solve_potentials(net, DiameterState(np.ones(2)))
    assert sol.drop == pytest.approx(0.5, abs=1e-12)
    assert sol.flows == pytest.approx([0.5, 0.5], abs=1e-12)
    assert energy(net, np.ones(2), sol.flows) == pytest.approx(0.5, abs=1e-12)


@given(st.lists(st.tuples(positive, positive), min_size=1, max_size=6))
def test_parallel_links_drop_is_inverse_total_conductance(pairs):
    L = [p[0] for p in pairs]
    D = np.array([p[1] for p in pairs])
    net = parallel_links(L)
    sol = solve_potentials(net, D)
    assert sol.drop == pytest.approx(1.0 / np.sum(D / np.array(L)), rel=1e-10)


def test_triangle_direct_edge_by_matrix_tree():
    net = build_network(
        ["s0", "m", "s1"],
        [("direct", "s0", "s1", 1.0), ("up", "s0", "m", 1.0), ("down", "m", "s1", 1.0)],
        {"s0": 1, "s1": -1},
    )
    Q = matrix_tree_flow(net, np.ones(3))
    assert Q == pytest.approx([2 / 3, 1 / 3, 1 / 3], abs=1e-14)
    assert spanning_tree_count(net) == 3


def test_balanced_bridge_carries_no_middle_current():
    net = shortest_path_instance(wheatstone(), "s0", "s1")
    sol = solve_potentials(net, np.ones(5))
    assert abs(sol.flow("e")) < 1e-14


def _random_state(seed, n, extra):
    rng = np.random.default_rng(seed)
    net = random_graph(rng, n, n - 1 + extra)
    D = np.exp(rng.uniform(-3, 3, net.m))
    return net, D


@given(st.integers(0, 2**32 - 1), st.integers(2, 6), st.integers(0, 5))
def test_flow_bounds_conservation_and_source_cut(seed, n, extra):
    net, D = _random_state(seed, n, extra)
    sol = solve_potentials(net, D)
    assert np.all(np.abs(sol.flows) <= 1 + 1e-9)
    assert np.abs(net.incidence.T @ sol.flows - net.b).max() < 1e-9
    i0 = net.node_index[net.s0]
    out = net.incidence[:, i0] * sol.flows
    assert out.sum() == pytest.approx(1.0, abs=1e-9)
    # potentials are monotone along the current
    assert np.all(sol.edge_drops * sol.flows >= -1e-15)


@given(st.integers(0, 2**32 - 1), st.integers(2, 5), st.integers(0, 4))
def test_laplacian_matches_matrix_tree(seed, n, extra):
    net, D = _random_state(seed, n, extra)
    assert solve_potentials(net, D).flows == pytest.approx(matrix_tree_flow(net, D), abs=1e-9)


@given(st.integers(0, 2**32 - 1), st.integers(3, 6), st.integers(1, 5))
def test_electrical_flow_minimises_energy_over_circulations(seed, n, extra):
    net, D = _random_state(seed, n, extra)
    sol = solve_potentials(net, D)
    base = energy(net, D, sol.flows)
    circ = cycle_basis_flows(net)
    rng = np.random.default_rng(seed)
    for row in circ:
        assert energy(net, D, sol.flows + rng.normal() * row) >= base - 1e-12


def test_cycle_basis_dimension():
    net = fig2_graph()
    circ = cycle_basis_flows(net)
    assert circ.shape == (net.m - net.n + 1, net.m)
    assert np.abs(net.incidence.T @ circ.T).max() < 1e-12


def _mp_potentials(net, cond, digits=60):
    mpmath.mp.dps = digits
    g = net.node_index[net.ground]
    keep = [i for i in range(net.n) if i != g]
    lap = mpmath.zeros(net.n, net.n)
    for k, e in enumerate(net.edges):
        a, b = net.node_index[e.u], net.node_index[e.v]
        c = mpmath.mpf(float(cond[k]))
        lap[a, a] += c
        lap[b, b] += c
        lap[a, b] -= c
        lap[b, a] -= c
    A = mpmath.matrix([[lap[i, j] for j in keep] for i in keep])
    rhs = mpmath.matrix([mpmath.mpf(float(net.b[i])) for i in keep])
    x = mpmath.lu_solve(A, rhs)
    p = [mpmath.mpf(0)] * net.n
    for r, i in enumerate(keep):
        p[i] = x[r]
    return p


@pytest.mark.parametrize("seed", range(6))
def test_multiscale_solve_matches_high_precision(seed):
    rng = np.random.default_rng(seed)
    net = random_graph(rng, 6, 9)
    cond = np.exp(rng.uniform(-40, 10, net.m))
    cond[rng.integers(net.m)] = 1e-25
    p, Q = LaplacianSolver(net).solve(cond, np.ones(net.m))
    ref = _mp_potentials(net, cond)
    Q_ref = [cond[k] * float(ref[net.node_index[e.u]] - ref[net.node_index[e.v]]) for k, e in enumerate(net.edges)]
    assert Q == pytest.approx(Q_ref, abs=1e-10)
    p_ref = np.array([float(x) for x in ref])
    assert p == pytest.approx(p_ref, rel=1e-9)


def test_multiscale_keeps_balanced_cluster_flat():
    # a zero-supply pendant cluster hanging on a 1e-20 conductance
    net = build_network(
        ["s0", "s1", "x", "y"],
        [("e", "s0", "s1", 1.0), ("h", "s1", "x", 1.0), ("k", "x", "y", 1.0)],
        {"s0": 1, "s1": -1},
    )
    p = LaplacianSolver(net).potentials(np.array([1.0, 1e-20, 1.0]))
    assert p.tolist() == pytest.approx([1.0, 0.0, 0.0, 0.0], abs=1e-12)


def test_cut_capacity_of_source_side():
    net = fig2_graph()
    assert cut_capacity(net, np.ones(net.m), {"s0"}) == 2.0


def test_nonpositive_diameters_rejected():
    with pytest.raises(ValueError):
        DiameterState(np.array([1.0, 0.0]))
    with pytest.raises(ValueError):
        solve_potentials(single_edge(), [-1.0])


def test_batched_solve_matches_row_by_row():
    rng = np.random.default_rng(12)
    net = random_graph(rng, 5, 8)
    cond = np.exp(rng.uniform(-2, 2, (4, net.m)))
    cond[1, 3] = 1e-22
    cond[3, 0] = 1e-15
    solver = LaplacianSolver(net)
    p, Q = solver.solve(cond, np.ones(net.m))
    for r in range(4):
        pr, Qr = solver.solve(cond[r], np.ones(net.m))
        assert p[r] == pytest.approx(pr, rel=1e-12, abs=1e-12)
        assert Q[r] == pytest.approx(Qr, rel=1e-12, abs=1e-12)
