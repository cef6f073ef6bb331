import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from physarum.dynamics import IntegratorConfig, derivative, integrate, step
from physarum.network import shortest_path_instance, wheatstone
from physarum.wheatstone import (
    EDGES,
    DegenerateRegimes,
    WheatstoneState,
    audit_regimes,
    conductance_derivatives,
    direction_changes,
    ratio_derivatives,
    regime_classify,
    sign_changes,
    sweep,
    sweep_csv,
)

lengths = st.tuples(*[st.floats(0.3, 3.0)] * 5)
diameters = st.tuples(*[st.floats(0.05, 5.0)] * 5)


def _net(L):
    return shortest_path_instance(wheatstone(*L), "s0", "s1")


def test_symmetric_values():
    s = WheatstoneState((1.0,) * 5, (1.0,) * 5)
    assert s.S == 8.0
    assert conductance_derivatives(s)[0] == pytest.approx(-0.5, abs=1e-15)
    assert ratio_derivatives(s)[0] == pytest.approx(0.0, abs=1e-15)
    assert s.x == (0.5, 0.5, 0.5, 0.5)


@given(lengths, diameters)
def test_ratio_invariants(L, D):
    s = WheatstoneState(L, D)
    xa, xb, xc, xd = s.x
    assert xa + xc == pytest.approx(1.0) and xb + xd == pytest.approx(1.0)
    assert sum(s.x_star[::2]) == pytest.approx(1.0)
    assert s.S > 0


@given(lengths, diameters)
def test_conductance_derivatives_match_general_field(L, D):
    s = WheatstoneState(L, D)
    net = _net(L)
    dD = derivative(net, np.array(D))
    general = [dD[net.edge_index[x]] / net.edge(x).length for x in "abcd"]
    assert conductance_derivatives(s) == pytest.approx(general, rel=1e-10, abs=1e-12)


@given(lengths, diameters)
def test_ratio_derivatives_match_chain_rule(L, D):
    s = WheatstoneState(L, D)
    net = _net(L)
    dD = derivative(net, np.array(D))
    C = np.array(s.C)
    dC = np.array([dD[net.edge_index[x]] / net.edge(x).length for x in EDGES])
    # x_a = C_c / (C_a + C_c), x_b = C_d / (C_b + C_d)
    dxa = (dC[2] * C[0] - C[2] * dC[0]) / (C[0] + C[2]) ** 2
    dxb = (dC[3] * C[1] - C[3] * dC[1]) / (C[1] + C[3]) ** 2
    assert ratio_derivatives(s) == pytest.approx([dxa, dxb], rel=1e-9, abs=1e-12)


def test_ratio_derivative_against_finite_difference():
    rng = np.random.default_rng(3)
    L = tuple(rng.uniform(0.5, 2.0, 5))
    D = rng.uniform(0.2, 2.0, 5)
    net = _net(L)
    h = 1e-4
    xa = [WheatstoneState(L, step(net, D, sgn * h)).x[0] for sgn in (1, -1)]
    assert ratio_derivatives(WheatstoneState(L, D))[0] == pytest.approx((xa[0] - xa[1]) / (2 * h), abs=1e-6)


@given(lengths, st.tuples(*[st.floats(0.05, 5.0)] * 4))
def test_sign_rule_without_middle_conductance(L, D4):
    s = WheatstoneState(L, (*D4, 1e-300))
    gap = s.x_star[0] - s.x[0]
    if abs(gap) < 1e-9:
        return
    assert np.sign(ratio_derivatives(s)[0]) == np.sign(gap)


def test_regime_examples():
    L = (1.0, 2.0, 2.0, 1.0, 1.0)  # x*_a = 1/3, x*_b = 2/3
    # equal conductances on a, c and on b, d put both ratios at 1/2
    s = WheatstoneState(L, (1.0, 2.0, 2.0, 1.0, 1.0))
    assert s.x[:2] == pytest.approx((0.5, 0.5))
    assert regime_classify(s) == ("M", "M")
    low = WheatstoneState(L, (1.0, 2.0, 0.1, 0.05, 1.0))
    assert max(low.x[:2]) < 1 / 3
    assert regime_classify(low) == ("S", "S")


def test_regime_relabelling_and_degenerate_case():
    s = WheatstoneState((2.0, 1.0, 1.0, 2.0, 1.0), (1.0, 1.0, 1.0, 1.0, 1.0))
    canon, swapped = s.canonical()
    assert swapped and canon.x_star[0] < canon.x_star[1]
    assert canon.mirrored() == s
    with pytest.raises(DegenerateRegimes):
        regime_classify(WheatstoneState((1.0,) * 5, (1.0,) * 5))


def test_sign_changes_respects_band():
    t = np.arange(6.0)
    assert sign_changes(t, np.array([1.0, 1e-13, -1e-13, 1.0, -2.0, -1.0])).times == (4.0,)
    assert sign_changes(t, np.array([1.0, -1.0, 1.0, 0.0, 0.0, -1.0])).count == 3


def test_balanced_bridge_never_flips():
    net = _net((1.0,) * 5)
    traj = integrate(net, np.ones(5), IntegratorConfig(t_end=10.0), monitors=False)
    assert direction_changes(traj).count == 0


def test_twice_changing_instance(corpus_dir):
    doc = json.loads((corpus_dir / "wheatstone_twice_changing.json").read_text())
    L = tuple(e["length"] for e in sorted(doc["edges"], key=lambda e: e["id"]))
    D0 = np.array([doc["initial_diameters"][x] for x in EDGES])
    traj = integrate(_net(L), D0, IntegratorConfig(t_end=30.0, record_stride=1), monitors=False)
    assert direction_changes(traj).count >= 2


def test_audit_flags_reentry_and_forbidden_transition():
    lo, hi = 0.3, 0.7
    back_to_SS = audit_regimes(np.array([0.1, 0.5, 0.1]), np.array([0.1, 0.2, 0.1]), lo, hi)
    assert back_to_SS.reentered_SS and not back_to_SS.ok
    rl_to_lr = audit_regimes(np.array([0.2, 0.9]), np.array([0.9, 0.2]), lo, hi)
    assert rl_to_lr.rl_to_lr == 1
    clean = audit_regimes(np.array([0.1, 0.4, 0.6]), np.array([0.1, 0.5, 0.65]), lo, hi)
    assert clean.ok


def test_small_sweep_passes_audit():
    records = sweep(12, seed=1, t_end=20.0)
    assert all(r.audit.ok for r in records)
    assert all(r.stabilized_as != "unstable" for r in records)
    assert all(r.lengths[0] / (r.lengths[0] + r.lengths[2]) < r.lengths[1] / (r.lengths[1] + r.lengths[3]) for r in records)
    text = sweep_csv(records)
    assert text.splitlines()[0].split(",")[-1] == "stabilized_as"
    assert len(text.splitlines()) == 13
    assert sweep_csv(sweep(12, seed=1, t_end=20.0)) == text
