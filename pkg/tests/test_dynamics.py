import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from physarum.dynamics import (
    IntegratorConfig,
    closed_form_relaxation,
    derivative,
    equilibrium_residual,
    integrate,
    integrate_batch,
    step,
)
from physarum.electrical import solve_potentials
from physarum.network import fig2_graph, parallel_links, random_graph, single_edge


def test_single_edge_derivative():
    assert derivative(single_edge(3.0), np.array([2.0])) == pytest.approx([-1.0], abs=1e-14)


def test_parallel_links_derivative():
    net = parallel_links([1.0, 2.0])
    assert derivative(net, np.array([1.0, 1.0])) == pytest.approx([-1 / 3, -2 / 3], abs=1e-14)


def test_single_edge_equilibrium_residual():
    net = single_edge()
    assert equilibrium_residual(np.array([2.0]), solve_potentials(net, [2.0])) == pytest.approx(1.0)


def test_near_equilibrium_on_shortest_path():
    net = fig2_graph()
    D = np.full(net.m, 1e-12)
    D[net.edge_index["e1"]] = 1.0
    assert np.abs(derivative(net, D)).max() < 1e-11
    assert equilibrium_residual(D, solve_potentials(net, D)) < 1e-11


@pytest.mark.parametrize("x0", [0.25, 2.0, 10.0])
def test_single_edge_matches_relaxation(x0):
    traj = integrate(single_edge(3.0), np.array([x0]), IntegratorConfig(t_end=5.0, record_stride=50), monitors=False)
    assert traj.D[:, 0] == pytest.approx(closed_form_relaxation(x0, traj.t), abs=1e-9)
    assert traj.t[-1] == pytest.approx(5.0)


def _error(method, dt, x0=4.0, t_end=2.0):
    traj = integrate(single_edge(1.0), np.array([x0]), IntegratorConfig(method=method, dt=dt, t_end=t_end), monitors=False)
    return abs(traj.D[-1, 0] - closed_form_relaxation(x0, t_end))


@pytest.mark.parametrize("method, order", [("rk4", 4), ("explicit-euler", 1)])
def test_convergence_order(method, order):
    coarse, fine = _error(method, 0.1), _error(method, 0.05)
    assert np.log2(coarse / fine) == pytest.approx(order, abs=0.2)


def test_backward_step_undoes_forward_step():
    net = fig2_graph()
    D = np.linspace(0.5, 2.0, net.m)
    there = step(net, D, 0.01)
    assert step(net, there, -0.01) == pytest.approx(D, abs=1e-9)


@given(st.integers(0, 2**32 - 1), st.integers(2, 5), st.integers(0, 4))
def test_diameters_stay_bounded(seed, n, extra):
    rng = np.random.default_rng(seed)
    net = random_graph(rng, n, n - 1 + extra)
    D0 = rng.uniform(0.1, 3.0, net.m)
    traj = integrate(net, D0, IntegratorConfig(t_end=4.0, record_stride=20), monitors=False)
    bound = 1.0 + (D0 - 1.0) * np.exp(-traj.t)[:, None]
    assert np.all(traj.D <= bound + 1e-6)
    assert np.all(traj.D > 0)


def test_parallel_total_hardware_relaxes():
    net = parallel_links([1.0, 2.0, 3.5])
    D0 = np.array([0.3, 1.7, 2.2])
    traj = integrate(net, D0, IntegratorConfig(t_end=6.0, record_stride=25), monitors=False)
    assert traj.D.sum(axis=1) == pytest.approx(closed_form_relaxation(D0.sum(), traj.t), abs=1e-8)


def test_until_stops_at_first_recorded_sample():
    net = single_edge()
    config = IntegratorConfig(t_end=10.0, record_stride=10)
    seen = []

    def until(D, p, Q):
        seen.append(D[0])
        return abs(D[0] - 1.0) < 0.5

    traj = integrate(net, np.array([3.0]), config, monitors=False, until=until)
    # 1 + 2 e^{-t} < 1.5 first at t > ln 4
    assert traj.t[-1] == pytest.approx(1.4, abs=1e-12)
    assert len(seen) == len(traj.t)


def test_records_every_stride_and_end_point():
    traj = integrate(single_edge(), np.array([2.0]), IntegratorConfig(dt=0.01, t_end=0.25, record_stride=10))
    assert traj.t == pytest.approx([0.0, 0.1, 0.2, 0.25])
    assert len(traj.monitors) == 4
    assert traj.at(0.2) == 2
    assert traj.column("e", "Q") == pytest.approx(np.ones(4))


def test_batch_matches_single_runs():
    net = fig2_graph()
    rng = np.random.default_rng(5)
    D0 = rng.uniform(0.2, 2.0, (3, net.m))
    config = IntegratorConfig(t_end=2.0, record_stride=50)
    batch = integrate_batch(net, D0, config)
    for r in range(3):
        single = integrate(net, D0[r], config, monitors=False)
        assert batch.D[:, r] == pytest.approx(single.D, rel=1e-10)


@pytest.mark.parametrize(
    "kwargs",
    [{"method": "midpoint"}, {"dt": 0.0}, {"dt": 1.5}, {"t_end": -1.0}, {"record_stride": 0}, {"diameter_floor": 1e-3}],
)
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        IntegratorConfig(**kwargs)


def test_config_from_dict_ignores_unknown_keys():
    cfg = IntegratorConfig.from_dict({"dt": 0.02, "t_end": 3.0, "comment": "x"})
    assert (cfg.dt, cfg.t_end, cfg.method) == (0.02, 3.0, "rk4")


def test_bad_initial_state_rejected():
    with pytest.raises(ValueError):
        integrate(single_edge(), np.array([0.0]))
    with pytest.raises(ValueError):
        integrate(fig2_graph(), np.ones(3))
