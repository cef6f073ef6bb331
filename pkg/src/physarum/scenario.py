"""Scenario documents and the per-scenario verification run.

A scenario is a JSON object with the network fields (``nodes``, ``edges``,
``supplies``), optional ``initial_diameters`` and ``integrator`` blocks, an
``id``, an optional ``anchor`` (makes it a transportation scenario) and an
``expected`` block of annotations that switch on extra checks.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Any

import numpy as np

from . import analysis, lyapunov, transportation, wheatstone
from .dynamics import IntegratorConfig, Trajectory, integrate
from .electrical import solver_for
from .network import Network, NetworkError, initial_diameters, parse_network

PROFILES = {"strict": 1.0, "loose": 10.0}


@dataclass(frozen=True)
class Tolerances:
    closed_form_single: float = 1e-6
    closed_form_parallel: float = 1e-4
    conservation: float = 1e-9
    v_slack: float = 1e-6
    h_floor: float = 1e-10
    w_decay: float = 1e-4
    convergence: float = 1e-3
    decay_rate: float = 0.05
    slope_exact: float = 1e-12
    limit_potential: float = 1e-2
    oracle_cost: float = 1e-3
    aux_flow: float = 1e-9
    v_equals_cost: float = 1e-2
    expected_value: float = 1e-9

    def scaled(self, factor: float) -> Tolerances:
        return Tolerances(**{k: v * factor for k, v in asdict(self).items()})

    @classmethod
    def profile(cls, name: str) -> Tolerances:
        if name not in PROFILES:
            raise ValueError(f"unknown tolerance profile {name!r}; choose from {sorted(PROFILES)}")
        return cls().scaled(PROFILES[name])


@dataclass
class Scenario:
    id: str
    network: Network
    D0: np.ndarray
    config: IntegratorConfig
    expected: dict
    kind: str
    instance: transportation.TransportationInstance | None = None
    doc: dict = field(default_factory=dict)

    @property
    def dynamic_network(self) -> Network:
        return self.instance.extended if self.instance else self.network


def scenario_from_doc(doc: dict, fallback_id: str = "scenario", seed: int = 0) -> Scenario:
    if not isinstance(doc, dict):
        raise NetworkError("scenario document must be a JSON object")
    net = parse_network(doc)
    config = IntegratorConfig.from_dict(doc.get("integrator"))
    anchor = doc.get("anchor")
    instance = None
    if anchor is not None:
        instance = transportation.build_instance(net, anchor)
        kind = "transportation"
    elif net.is_shortest_path:
        kind = doc.get("kind", "shortest_path")
    else:
        raise NetworkError("scenario needs a shortest-path pair of supplies or an 'anchor' node")
    dyn = instance.extended if instance else net
    D0 = initial_diameters(dyn, doc.get("initial_diameters"), seed=doc.get("seed", seed))
    return Scenario(str(doc.get("id", fallback_id)), net, D0, config, dict(doc.get("expected", {})), kind, instance, doc)


def load_scenario(path: str | Path, seed: int = 0) -> Scenario:
    path = Path(path)
    text = path.read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise NetworkError(f"{path}: malformed document: {exc}") from exc
    return scenario_from_doc(doc, path.stem, seed)


def corpus_files(directory: str | Path) -> list[Path]:
    return sorted(Path(directory).glob("*.json"))


# -- checks ---------------------------------------------------------------------------

@dataclass
class Check:
    name: str
    value: float | int | bool | str
    tolerance: float | None
    passed: bool

    def to_dict(self) -> dict:
        return {"name": self.name, "value": _finite(self.value), "tolerance": self.tolerance, "passed": self.passed}


def _finite(x):
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x


@dataclass
class RunReport:
    scenario: str
    kind: str
    config: dict
    metrics: dict = field(default_factory=dict)
    checks: list[Check] = field(default_factory=list)
    tables: dict = field(default_factory=dict)
    error: str | None = None

    @property
    def passed(self) -> bool:
        return self.error is None and all(c.passed for c in self.checks)

    @property
    def status(self) -> str:
        return "pass" if self.passed else "fail"

    def add(self, name: str, value, tolerance: float | None, passed: bool) -> None:
        if isinstance(value, (np.floating, np.integer)):
            value = value.item()
        self.checks.append(Check(name, value, tolerance, bool(passed)))

    def at_most(self, name: str, value: float, tolerance: float) -> None:
        self.add(name, float(value), tolerance, bool(value <= tolerance))

    def failures(self) -> list[str]:
        out = [c.name for c in self.checks if not c.passed]
        if self.error:
            out.append(f"error: {self.error}")
        return out

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "kind": self.kind,
            "config": self.config,
            "status": self.status,
            "error": self.error,
            "metrics": {k: _finite(v) for k, v in self.metrics.items()},
            "checks": [c.to_dict() for c in self.checks],
            "tables": self.tables,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False)


def _config_echo(config: IntegratorConfig) -> dict:
    return asdict(config)


def _check_invariants(rep: RunReport, sc: Scenario, traj: Trajectory, tol: Tolerances) -> None:
    net = traj.network
    res = solver_for(net).residual(traj.Q)
    rep.at_most("conservation_residual", float(np.max(res)), tol.conservation)
    rep.add("positivity", float(traj.D.min()), None, bool(traj.D.min() > 0))
    rep.metrics["floor_hits"] = traj.floor_hits
    # electrical flows are acyclic, so |Q_e| <= total supply B and
    # D_e(0) e^{-t} <= D_e(t) <= B + (D_e(0) - B) e^{-t}
    B = float(np.sum(np.clip(net.b, 0.0, None)))
    decay = np.exp(-traj.t)[:, None]
    upper = np.max(traj.D - (B + (traj.D[0] - B) * decay))
    lower = np.max(traj.D[0] * decay - traj.D)
    rep.at_most("upper_bound_excess", float(max(upper, 0.0)), tol.v_slack)
    rep.at_most("lower_bound_excess", float(max(lower, 0.0)), tol.v_slack)


def _check_lyapunov(rep: RunReport, traj: Trajectory, tol: Tolerances) -> None:
    mr = lyapunov.monotonicity_report(traj, slack=tol.v_slack, h_tol=tol.h_floor)
    rep.add("V_monotone_violations", len(mr.v_increases), tol.v_slack, not mr.v_increases)
    rep.add("h_nonnegative_violations", len(mr.negative_h), tol.h_floor, not mr.negative_h)
    rep.add("W_nonnegative_violations", len(mr.negative_W), 0.0, not mr.negative_W)
    rep.metrics["V_max_increase_per_step"] = mr.max_increase
    rep.metrics["estimate_violations"] = len(mr.estimate_violations)
    rep.metrics["sharp_bound_violations"] = len(mr.sharp_violations)
    W = np.array([m.W for m in traj.monitors])
    rep.at_most("W_closed_form_error", float(np.max(np.abs(W - W[0] * np.exp(-2 * traj.t)))), tol.w_decay)
    last = traj.monitors[-1]
    rep.metrics.update(V_final=last.V, h_final=last.h, C_final=last.C, Delta_final=last.Delta)


def _check_closed_forms(rep: RunReport, sc: Scenario, traj: Trajectory, tol: Tolerances) -> None:
    kind = sc.expected.get("closed_form")
    if kind == "single_edge":
        worst = 0.0
        for t in (1.0, 5.0):
            k = traj.at(t)
            if abs(traj.t[k] - t) > 1e-9:
                raise ValueError(f"trajectory has no sample at t={t}")
            exact = 1.0 + (sc.D0[0] - 1.0) * math.exp(-t)
            worst = max(worst, abs(traj.D[k, 0] - exact))
        rep.at_most("single_edge_closed_form", worst, tol.closed_form_single)
    elif kind == "parallel_links":
        mask = traj.t <= 10.0 + 1e-9
        exact = 1.0 + (sc.D0.sum() - 1.0) * np.exp(-traj.t[mask])
        total = traj.D[mask].sum(axis=1)
        rep.at_most("parallel_total_closed_form", float(np.max(np.abs(total - exact))), tol.closed_form_parallel)
    if kind in ("single_edge", "parallel_links"):
        mask = traj.t <= 10.0 + 1e-9
        cut0 = lyapunov.source_cut(sc.network, sc.D0)
        exact = 1.0 + (cut0 - 1.0) * np.exp(-traj.t[mask])
        cut = np.array([lyapunov.source_cut(sc.network, D) for D in traj.D[mask]])
        rep.at_most("source_cut_closed_form", float(np.max(np.abs(cut - exact))), tol.closed_form_parallel)


def _check_shortest_path(rep: RunReport, sc: Scenario, traj: Trajectory, tol: Tolerances) -> None:
    summary = analysis.shortest_path_oracle(sc.network)
    rep.metrics["L_star"] = summary.L_star
    rep.metrics["unique_shortest_path"] = summary.unique
    exp = sc.expected
    if "L_star" in exp:
        rep.at_most("L_star_matches_expected", abs(summary.L_star - float(exp["L_star"])), tol.expected_value)
    if "unique_shortest_path" in exp:
        rep.add("uniqueness_matches_expected", summary.unique, None, summary.unique == bool(exp["unique_shortest_path"]))
    att = analysis.attraction_metrics(traj, summary).terminal()
    rep.metrics.update({f"attraction_{k}": v for k, v in att.items()})
    half = traj.at(traj.t[-1] / 2)
    rep.metrics["mass_off_G0_half"] = float(analysis.attraction_metrics(traj, summary).mass_off_G0[half])
    if exp.get("converges"):
        for key in ("path_deviation", "drop_error", "potential_error"):
            if key in att:
                rep.at_most(f"convergence_{key}", att[key], tol.convergence)
        res = float(np.max(np.abs(traj.D[-1] - np.abs(traj.Q[-1]))))
        rep.at_most("equilibrium_residual", res, tol.convergence)
    if "slopes" in exp:
        _check_decomposition(rep, sc, traj, tol)


def decay_table(traj: Trajectory, dec: analysis.PathDecomposition, window=(30.0, 60.0)) -> list[dict]:
    rows = []
    for eid in traj.network.edge_ids:
        r = float(dec.rates[eid])
        fit = analysis.decay_rate_fit(traj, eid, window)
        rows.append({"edge_id": eid, "r_predicted": r, "r_fitted": fit, "abs_error": abs(fit - r)})
    return rows


def decay_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["edge_id", "r_predicted", "r_fitted", "abs_error"])
    for r in rows:
        w.writerow([r["edge_id"], repr(r["r_predicted"]), repr(r["r_fitted"]), repr(r["abs_error"])])
    return buf.getvalue()


def _check_decomposition(rep: RunReport, sc: Scenario, traj: Trajectory, tol: Tolerances) -> None:
    dec = analysis.path_decomposition(sc.network)
    want = [Fraction(s) for s in sc.expected["slopes"]]
    got = dec.slopes
    ok = len(want) == len(got) and all(abs(float(a - b)) <= tol.slope_exact for a, b in zip(want, got))
    rep.add("slopes_match_expected", " ".join(str(f) for f in got), tol.slope_exact, ok)
    rep.add("slopes_ordered", dec.slopes_ordered(), None, dec.slopes_ordered())
    window = tuple(sc.expected.get("decay_window", (30.0, 60.0)))
    if traj.t[-1] >= window[1] - 1e-9:
        rows = decay_table(traj, dec, window)
        rep.tables["decay"] = rows
        rep.at_most("decay_rate_error", max(r["abs_error"] for r in rows), tol.decay_rate)
    status = analysis.stabilization_classify(traj)
    unstable = [e for e, s in status.items() if s.kind == "unstable"]
    rep.metrics["unstable_edges"] = len(unstable)
    mismatched = []
    for eid, st in status.items():
        o = dec.orientations[eid]
        if st.kind == "unstable":
            continue
        if (o is None) != (st.kind == "horizontal") or (o is not None and o != (st.tail, st.head)):
            mismatched.append(eid)
    rep.add("orientation_mismatches", len(mismatched), None, not mismatched)
    p = traj.p[-1]
    err = max(abs(p[traj.network.node_index[v]] - float(x)) for v, x in dec.potentials.items())
    rep.at_most("limit_potential_error", err, tol.limit_potential)


def _check_transportation(rep: RunReport, sc: Scenario, traj: Trajectory, tol: Tolerances) -> None:
    inst = sc.instance
    oracle = transportation.min_cost_oracle(inst)
    report = transportation.transport_convergence_report(traj, inst, oracle)
    rep.metrics.update(
        terminal_cost=report.terminal_cost,
        oracle_cost=report.oracle_cost,
        cost_gap=report.gap,
        tie_flag=report.tie,
        terminal_residual=report.terminal_residual,
    )
    if "oracle_cost" in sc.expected:
        rep.at_most("oracle_matches_expected", abs(oracle.cost - float(sc.expected["oracle_cost"])), tol.expected_value)
    if "tie" in sc.expected:
        rep.add("tie_flag_matches_expected", report.tie, None, report.tie == bool(sc.expected["tie"]))
    rep.at_most("aux_flow_error", report.aux_flow_error, tol.aux_flow)
    if sc.expected.get("converges"):
        if report.tie:
            rep.add("optimum_not_asserted_under_tie", True, None, True)
        else:
            rep.at_most("terminal_cost_gap", report.gap, tol.oracle_cost)
        rep.at_most("equilibrium_residual", report.terminal_residual, tol.convergence)
        last = traj.monitors[-1]
        rep.at_most("V_equals_cost", abs(last.V - last.flow_cost), tol.v_equals_cost)


def _check_wheatstone(rep: RunReport, sc: Scenario, traj: Trajectory, tol: Tolerances) -> None:
    net = sc.network
    state = wheatstone.WheatstoneState.from_network(net, traj.D[0])
    canon, swapped = state.canonical()
    L = np.array(canon.lengths)
    D = traj.D[:, [net.edge_index[x] for x in wheatstone.EDGES]]
    if swapped:
        D = D[:, [1, 0, 3, 2, 4]]
    lo, hi = canon.x_star[:2]
    changes = wheatstone.direction_changes(traj)
    rep.metrics["middle_edge_changes"] = changes.count
    rep.metrics["middle_edge_change_times"] = list(changes.times)
    status = analysis.stabilization_classify(traj)["e"]
    rep.metrics["middle_edge_status"] = str(status)
    rep.add("middle_edge_stabilized", str(status), None, status.kind != "unstable")
    if hi - lo > wheatstone.DEGENERATE_GAP:
        C = D / L
        xa = C[:, 2] / (C[:, 0] + C[:, 2])
        xb = C[:, 3] / (C[:, 1] + C[:, 3])
        dxa, dxb = wheatstone.ratio_derivatives_array(D, L)
        audit = wheatstone.audit_regimes(xa, xb, lo, hi, dxa, dxb)
        rep.metrics["regime_audit"] = asdict(audit)
        rep.add("regime_rules", audit.ok, None, audit.ok)
    exp = sc.expected
    if "middle_edge" in exp:
        rep.add("middle_edge_matches_expected", status.kind, None, status.kind == exp["middle_edge"])
    if "min_changes" in exp:
        rep.add("min_direction_changes", changes.count, None, changes.count >= int(exp["min_changes"]))


def run_scenario(
    sc: Scenario,
    tol: Tolerances | None = None,
    overrides: dict | None = None,
    trajectory: Trajectory | None = None,
) -> tuple[RunReport, Trajectory | None]:
    """Integrate the scenario and evaluate every enabled check."""
    tol = tol or Tolerances()
    config = replace(sc.config, **(overrides or {}))
    rep = RunReport(sc.id, sc.kind, _config_echo(config))
    traj = trajectory
    try:
        if traj is None:
            traj = integrate(sc.dynamic_network, sc.D0, config)
        _check_invariants(rep, sc, traj, tol)
        _check_lyapunov(rep, traj, tol)
        _check_closed_forms(rep, sc, traj, tol)
        if sc.kind == "transportation":
            _check_transportation(rep, sc, traj, tol)
        else:
            _check_shortest_path(rep, sc, traj, tol)
        if sc.kind == "wheatstone":
            _check_wheatstone(rep, sc, traj, tol)
    except (ArithmeticError, ValueError, RuntimeError) as exc:
        rep.error = f"{type(exc).__name__}: {exc}"
    return rep, traj


# -- exports --------------------------------------------------------------------------

def trajectory_csv(traj: Trajectory) -> str:
    """Long format ``t,edge_id,D,Q,dD`` with ``dD = |Q| - D``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "edge_id", "D", "Q", "dD"])
    ids = traj.network.edge_ids
    for k, t in enumerate(traj.t):
        D, Q = traj.D[k], traj.Q[k]
        dD = np.abs(Q) - D
        for j, eid in enumerate(ids):
            w.writerow([repr(float(t)), eid, repr(float(D[j])), repr(float(Q[j])), repr(float(dD[j]))])
    return buf.getvalue()


def monitor_csv(traj: Trajectory) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(lyapunov.MonitorRecord.CSV_FIELDS)
    for m in traj.monitors or []:
        w.writerow([repr(float(x)) for x in m.row()])
    return buf.getvalue()


def json_dump(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False)
