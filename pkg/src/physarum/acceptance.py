"""The nine acceptance criteria as callable checks.

Each ``criterion_N`` returns a :class:`CriterionResult`.  Runtime budgets are
part of the verdict.  Criteria 4 and 5 share one integration of the corpus
through :func:`run_corpus`, which is memoised per corpus and profile.
"""

from __future__ import annotations

import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import networkx as nx
import numpy as np

from . import analysis, lyapunov, transportation, wheatstone
from .dynamics import IntegratorConfig, integrate, step
from .electrical import cycle_basis_flows, energy, matrix_tree_flow, solve_potentials, spanning_trees
from .network import NetworkError, fig2_graph, parallel_links, random_graph, single_edge
from .scenario import RunReport, Scenario, Tolerances, corpus_files, load_scenario, run_scenario

log = logging.getLogger(__name__)

CORPUS_ENV = "PHYSARUM_CORPUS"
MIN_CORPUS = 20
# transportation runs stop once settled on a forest; t_end is only a cap
TRANSPORT_CONFIG = IntegratorConfig(dt=0.025, t_end=1500.0, record_stride=20)
CONVERGENCE_CONFIG = IntegratorConfig(dt=0.01, t_end=60.0, record_stride=10)


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    budget: float | None
    elapsed: float = 0.0
    detail: dict = field(default_factory=dict)

    @property
    def within_budget(self) -> bool:
        return self.budget is None or self.elapsed < self.budget

    @property
    def ok(self) -> bool:
        return self.passed and self.within_budget

    def line(self) -> str:
        budget = f" budget {self.budget:g}s" if self.budget is not None else ""
        verdict = "PASS" if self.ok else "FAIL"
        summary = ", ".join(f"{k}={_short(v)}" for k, v in self.detail.items() if not isinstance(v, (list, dict)))
        return f"criterion {self.number} {verdict} {self.name}: {summary} ({self.elapsed:.1f}s{budget})"

    def to_dict(self) -> dict:
        # elapsed time is left out so that reports stay byte-identical
        return {
            "number": self.number,
            "name": self.name,
            "passed": self.ok,
            "budget_seconds": self.budget,
            "within_budget": self.within_budget,
            "detail": self.detail,
        }


def _short(v):
    if isinstance(v, float):
        return f"{v:.3g}"
    return v


def _timed(number: int, name: str, budget: float | None):
    def wrap(fn):
        def run(*args, **kwargs) -> CriterionResult:
            start = time.perf_counter()
            passed, detail = fn(*args, **kwargs)
            return CriterionResult(number, name, bool(passed), budget, time.perf_counter() - start, detail)

        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        return run

    return wrap


# -- corpus ---------------------------------------------------------------------------

def default_corpus() -> Path:
    env = os.environ.get(CORPUS_ENV)
    if env:
        return Path(env)
    local = Path.cwd() / "corpus"
    if local.is_dir():
        return local
    return Path(__file__).resolve().parents[2] / "corpus"


@dataclass
class CorpusEntry:
    scenario: Scenario
    report: RunReport
    trajectory: object


@dataclass
class CorpusRun:
    entries: list[CorpusEntry]
    elapsed: float


_CORPUS_CACHE: dict[tuple, CorpusRun] = {}


def _run_one(args):
    path, profile, seed = args
    sc = load_scenario(path, seed)
    rep, traj = run_scenario(sc, Tolerances.profile(profile))
    return CorpusEntry(sc, rep, traj)


def run_corpus(corpus: str | Path | None = None, profile: str = "strict", jobs: int = 1, seed: int = 0) -> CorpusRun:
    """Load and run every scenario of a corpus once; results sorted by scenario id."""
    corpus = Path(corpus) if corpus is not None else default_corpus()
    files = corpus_files(corpus)
    key = (str(corpus.resolve()), tuple((str(f), f.stat().st_mtime_ns) for f in files), profile, seed)
    if key in _CORPUS_CACHE:
        return _CORPUS_CACHE[key]
    start = time.perf_counter()
    work = [(f, profile, seed) for f in files]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            entries = list(pool.map(_run_one, work))
    else:
        entries = [_run_one(w) for w in work]
    entries.sort(key=lambda e: e.scenario.id)
    run = CorpusRun(entries, time.perf_counter() - start)
    _CORPUS_CACHE[key] = run
    return run


# -- criteria -------------------------------------------------------------------------

@_timed(1, "closed forms", None)
def criterion_1() -> tuple[bool, dict]:
    """Single-edge and parallel-links relaxation against their exact solutions.

    The one-second budget applies to each sub-check; the slowest is reported.
    """
    worst_single = 0.0
    slowest = 0.0
    for D0 in (0.25, 2.0, 10.0):
        start = time.perf_counter()
        traj = integrate(single_edge(3.0), np.array([D0]), IntegratorConfig(t_end=5.0, record_stride=100), monitors=False)
        for t in (1.0, 5.0):
            k = traj.at(t)
            worst_single = max(worst_single, abs(traj.D[k, 0] - (1.0 + (D0 - 1.0) * math.exp(-t))))
        slowest = max(slowest, time.perf_counter() - start)
    rng = np.random.default_rng(1)
    worst_parallel = 0.0
    for lengths in ((1.0, 2.0, 3.5), (0.7, 0.9, 1.3, 4.0), (2.0, 2.5)):
        start = time.perf_counter()
        net = parallel_links(lengths)
        D0 = rng.uniform(0.1, 3.0, net.m)
        traj = integrate(net, D0, IntegratorConfig(t_end=10.0, record_stride=1), monitors=False)
        exact = 1.0 + (D0.sum() - 1.0) * np.exp(-traj.t)
        cut = np.array([lyapunov.source_cut(net, D) for D in traj.D])
        worst_parallel = max(
            worst_parallel,
            float(np.max(np.abs(traj.D.sum(axis=1) - exact))),
            float(np.max(np.abs(cut - exact))),
        )
        slowest = max(slowest, time.perf_counter() - start)
    ok = worst_single <= 1e-6 and worst_parallel <= 1e-4 and slowest < 1.0
    return ok, {"single_edge_error": worst_single, "parallel_error": worst_parallel, "slowest_subcheck_s": round(slowest, 3)}


def _random_small(rng: np.random.Generator):
    n = int(rng.integers(2, 7))
    m = int(rng.integers(n - 1, 10))
    return random_graph(rng, n, max(m, 1))


@_timed(2, "matrix-tree oracle", 10.0)
def criterion_2(instances: int = 200, seed: int = 2) -> tuple[bool, dict]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        net = _random_small(rng)
        D = 2.0 - rng.uniform(0.0, 2.0, net.m)  # (0, 2]
        worst = max(worst, float(np.max(np.abs(matrix_tree_flow(net, D) - solve_potentials(net, D).flows))))
    return worst <= 1e-10, {"instances": instances, "max_flow_difference": worst}


@_timed(3, "Thomson principle", 10.0)
def criterion_3(instances: int = 50, flows: int = 100, seed: int = 3) -> tuple[bool, dict]:
    """Electrical flow energy against random feasible flows.

    Feasible flows are a random spanning-tree flow plus a random circulation,
    so they never depend on the electrical solution.
    """
    rng = np.random.default_rng(seed)
    worst_excess = -np.inf
    worst_feasibility = 0.0
    for _ in range(instances):
        net = _random_small(rng)
        D = 2.0 - rng.uniform(0.0, 2.0, net.m)
        Q = solve_potentials(net, D).flows
        e_Q = energy(net, D, Q)
        trees = list(spanning_trees(net))
        B = np.asarray(net.incidence)
        kernel = cycle_basis_flows(net)
        for _ in range(flows):
            x = transportation.tree_flow(net, trees[rng.integers(len(trees))])
            if len(kernel):
                x = x + (10.0 ** rng.uniform(-4, 1)) * (rng.normal(size=len(kernel)) @ kernel)
            worst_feasibility = max(worst_feasibility, float(np.max(np.abs(B.T @ x - net.b))))
            worst_excess = max(worst_excess, e_Q - energy(net, D, x))
    ok = worst_excess <= 1e-12 and worst_feasibility <= 1e-9
    return ok, {"pairs": instances * flows, "max_energy_excess": float(worst_excess), "max_infeasibility": worst_feasibility}


def _lyapunov_checks(rep: RunReport) -> list[str]:
    names = ("V_monotone_violations", "h_nonnegative_violations", "W_nonnegative_violations", "W_closed_form_error")
    out = [c.name for c in rep.checks if c.name in names and not c.passed]
    present = {c.name for c in rep.checks}
    out += [f"missing {n}" for n in names if n not in present]
    if rep.error:
        out.append(rep.error)
    return out


@_timed(4, "Lyapunov suite", 120.0)
def criterion_4(corpus=None, profile: str = "strict", jobs: int = 1) -> tuple[bool, dict]:
    run = run_corpus(corpus, profile, jobs)
    bad = {e.scenario.id: f for e in run.entries if (f := _lyapunov_checks(e.report))}
    ok = len(run.entries) >= MIN_CORPUS and not bad
    return ok, {
        "scenarios": len(run.entries),
        "failing": sorted(bad),
        "max_V_increase_per_step": max((e.report.metrics.get("V_max_increase_per_step", 0.0) for e in run.entries), default=0.0),
        "corpus_run_s": round(run.elapsed, 1),
    }


def _is_convergence_run(config: IntegratorConfig) -> bool:
    return config.method == "rk4" and config.dt == 0.01 and config.t_end == 60.0


@_timed(5, "shortest-path convergence", 120.0)
def criterion_5(corpus=None, profile: str = "strict", jobs: int = 1) -> tuple[bool, dict]:
    run = run_corpus(corpus, profile, jobs)
    tol = Tolerances.profile(profile).convergence
    checked, failing = [], {}
    worst = 0.0
    for entry in run.entries:
        sc = entry.scenario
        if sc.kind == "transportation":
            continue
        summary = analysis.shortest_path_oracle(sc.network)
        if not summary.unique:
            continue
        traj = entry.trajectory
        if traj is None or not _is_convergence_run(sc.config):
            traj = integrate(sc.network, sc.D0, CONVERGENCE_CONFIG, monitors=False)
        att = analysis.attraction_metrics(traj, summary).terminal()
        metrics = {k: att[k] for k in ("path_deviation", "drop_error", "potential_error")}
        worst = max(worst, *metrics.values())
        checked.append(sc.id)
        if any(v > tol for v in metrics.values()):
            failing[sc.id] = metrics
    ok = bool(checked) and not failing
    return ok, {"scenarios": len(checked), "worst_deviation": worst, "failing": sorted(failing)}


P1_EDGES = ("e2", "e3", "e4")
P2_EDGES = ("e5", "e6")


@_timed(6, "decay rates", None)
def criterion_6(window=(30.0, 60.0)) -> tuple[bool, dict]:
    net = fig2_graph()
    dec = analysis.path_decomposition(net)
    slopes_ok = tuple(dec.slopes) == (Fraction(1), Fraction(1, 3), Fraction(1, 6))
    traj = integrate(net, np.ones(net.m), CONVERGENCE_CONFIG, monitors=False)
    errors = {}
    for edges, rate in ((P1_EDGES, -2.0 / 3.0), (P2_EDGES, -5.0 / 6.0)):
        for eid in edges:
            errors[eid] = abs(analysis.decay_rate_fit(traj, eid, window) - rate)
    worst = max(errors.values())
    return slopes_ok and worst <= 0.05, {
        "slopes": " ".join(str(s) for s in dec.slopes),
        "max_rate_error": worst,
    }


@_timed(7, "Wheatstone", 180.0)
def criterion_7(states: int = 100, trajectories: int = 500, seed: int = 7, h: float = 1e-4) -> tuple[bool, dict]:
    """Closed-form ratio derivatives against central differences, then a sweep audit."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(states):
        L = rng.uniform(0.5, 2.0, 5)
        D = 10.0 ** rng.uniform(-1.0, 1.0, 5)
        state = wheatstone.WheatstoneState(tuple(L), tuple(D))
        net = state.network()
        fwd = wheatstone.WheatstoneState(tuple(L), tuple(step(net, D, h))).x
        back = wheatstone.WheatstoneState(tuple(L), tuple(step(net, D, -h))).x
        fd = ((fwd[0] - back[0]) / (2 * h), (fwd[1] - back[1]) / (2 * h))
        worst = max(worst, *(abs(a - b) for a, b in zip(wheatstone.ratio_derivatives(state), fd)))
    records = wheatstone.sweep(trajectories, seed=seed)
    audit_failures = sum(not r.audit.ok for r in records)
    unstable = sum(r.stabilized_as == "unstable" for r in records)
    labels: dict[str, int] = {}
    for r in records:
        labels[r.stabilized_as] = labels.get(r.stabilized_as, 0) + 1
    ok = worst <= 1e-6 and audit_failures == 0 and unstable == 0
    return ok, {
        "max_derivative_error": worst,
        "audit_failures": audit_failures,
        "unstable": unstable,
        "labels": dict(sorted(labels.items())),
    }


@_timed(8, "transportation", 180.0)
def criterion_8(instances: int = 50, seed: int = 8, config: IntegratorConfig = TRANSPORT_CONFIG) -> tuple[bool, dict]:
    rng = np.random.default_rng(seed)
    worst_gap = worst_aux = worst_increase = 0.0
    failing = []
    ties = 0
    horizon = 0.0
    for i in range(instances):
        net = transportation.random_instance(rng, n=int(rng.integers(3, 7)), extra_edges=int(rng.integers(0, 4)))
        inst = transportation.build_instance(net, net.nodes[0])
        oracle = transportation.min_cost_oracle(inst)
        traj = integrate(inst.extended, np.ones(inst.extended.m), config, until=transportation.forest_settled(inst.extended))
        rep = transportation.transport_convergence_report(traj, inst, oracle)
        mono = lyapunov.monotonicity_report(traj, slack=1e-6)
        ties += rep.tie
        horizon = max(horizon, float(traj.t[-1]))
        worst_aux = max(worst_aux, rep.aux_flow_error)
        worst_increase = max(worst_increase, mono.max_increase)
        if not rep.tie:
            worst_gap = max(worst_gap, rep.gap)
        if not rep.passed(1e-3, 1e-9) or mono.v_increases:
            failing.append(i)
    return not failing, {
        "instances": instances,
        "max_cost_gap": worst_gap,
        "max_aux_flow_error": worst_aux,
        "max_V_increase_per_step": worst_increase,
        "ties": ties,
        "longest_run_t": horizon,
        "failing": failing,
    }


@_timed(9, "V minimisation", None)
def criterion_9(instances: int = 10, seed: int = 9, iterations: int = 20000) -> tuple[bool, dict]:
    """Local search on V reaches the shortest-path length computed by networkx."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    done = 0
    while done < instances:
        n = int(rng.integers(3, 6))
        try:
            net = random_graph(rng, n, int(rng.integers(n, n + 3)), parallel=False)
        except NetworkError:
            continue
        g = nx.MultiGraph()
        for e in net.edges:
            g.add_edge(e.u, e.v, weight=e.length)
        L_star = nx.dijkstra_path_length(g, net.s0, net.s1)
        value, _ = lyapunov.minimize_V(net, rng, iterations=iterations)
        worst = max(worst, abs(value - L_star))
        done += 1
    return worst <= 1e-2, {"instances": instances, "max_gap_to_L_star": worst}


CRITERIA = {
    1: criterion_1,
    2: criterion_2,
    3: criterion_3,
    4: criterion_4,
    5: criterion_5,
    6: criterion_6,
    7: criterion_7,
    8: criterion_8,
    9: criterion_9,
}
CORPUS_CRITERIA = (4, 5)


def run_criteria(numbers=None, corpus=None, profile: str = "strict", jobs: int = 1, echo=None) -> list[CriterionResult]:
    out = []
    for k in sorted(CRITERIA if numbers is None else numbers):
        fn = CRITERIA[k]
        res = fn(corpus, profile, jobs) if k in CORPUS_CRITERIA else fn()
        if echo:
            echo(res.line())
        out.append(res)
    return out
