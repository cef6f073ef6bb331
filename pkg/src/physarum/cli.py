"""Command-line driver: ``physarum <subcommand> ...``.

Exit codes: 0 pass, 1 assertion failure, 2 usage or I/O error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import acceptance, analysis, transportation, wheatstone
from .dynamics import integrate
from .network import NetworkError
from .scenario import (
    PROFILES,
    Tolerances,
    corpus_files,
    decay_csv,
    json_dump,
    load_scenario,
    monitor_csv,
    run_scenario,
    trajectory_csv,
)

EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _common(p: argparse.ArgumentParser, sim: bool = True) -> None:
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory (default: out)")
    p.add_argument("--seed", type=int, default=0, help="seed for random initial states and sweeps (default: 0)")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.add_argument("--tolerance-profile", choices=sorted(PROFILES), default="strict")
    if sim:
        p.add_argument("--dt", type=float, help="step size override")
        p.add_argument("--method", choices=("rk4", "explicit-euler"), help="integrator override")
        p.add_argument("--t-end", type=float, help="final time override")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="physarum", description="Simulate and verify Physarum network dynamics.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="integrate one scenario; write CSV time series and a JSON report")
    p.add_argument("scenario", type=Path)
    _common(p)

    p = sub.add_parser("verify", help="run every corpus scenario and the acceptance criteria")
    p.add_argument("corpus", type=Path, nargs="?", help="corpus directory (default: $PHYSARUM_CORPUS or ./corpus)")
    p.add_argument("--criteria", default="all", help="comma-separated criterion numbers, 'all' or 'none'")
    _common(p)

    p = sub.add_parser("decompose", help="exact path decomposition of a shortest-path scenario")
    p.add_argument("scenario", type=Path)
    _common(p, sim=False)

    p = sub.add_parser("wheatstone-sweep", help="randomised Wheatstone trajectories with regime audit")
    p.add_argument("--n", type=int, default=500, help="number of trajectories")
    _common(p)

    p = sub.add_parser("transport", help="transportation convergence against the exact oracle")
    p.add_argument("scenario", type=Path, nargs="?", help="scenario with an 'anchor' node")
    p.add_argument("--instances", type=int, default=0, help="random instances to run instead of a scenario")
    _common(p)
    return ap


def _overrides(args) -> dict:
    out = {}
    for key, attr in (("dt", "dt"), ("method", "method"), ("t_end", "t_end")):
        val = getattr(args, attr, None)
        if val is not None:
            out[key] = val
    return out


def _write(out: Path, name: str, text: str) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    path.write_text(text)
    return path


def _load(path: Path, seed: int):
    if not path.is_file():
        raise UsageError(f"no such scenario file: {path}")
    return load_scenario(path, seed)


# -- subcommands ----------------------------------------------------------------------

def cmd_simulate(args) -> int:
    sc = _load(args.scenario, args.seed)
    try:
        replace(sc.config, **_overrides(args))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    rep, traj = run_scenario(sc, Tolerances.profile(args.tolerance_profile), _overrides(args))
    if traj is not None:
        _write(args.out, "trajectory.csv", trajectory_csv(traj))
        _write(args.out, "monitors.csv", monitor_csv(traj))
    if "decay" in rep.tables:
        _write(args.out, "decay.csv", decay_csv(rep.tables["decay"]))
    _write(args.out, "report.json", rep.to_json() + "\n")
    print(f"{sc.id}: {rep.status}")
    for name in rep.failures():
        print(f"  failed: {name}")
    return EXIT_PASS if rep.passed else EXIT_FAIL


def _criteria(spec: str) -> list[int]:
    if spec == "all":
        return sorted(acceptance.CRITERIA)
    if spec == "none":
        return []
    try:
        nums = sorted({int(x) for x in spec.split(",")})
    except ValueError as exc:
        raise UsageError(f"bad --criteria value {spec!r}") from exc
    if not set(nums) <= set(acceptance.CRITERIA):
        raise UsageError(f"criteria must lie in 1..{len(acceptance.CRITERIA)}")
    return nums


def cmd_verify(args) -> int:
    corpus = args.corpus or acceptance.default_corpus()
    if not corpus.is_dir():
        raise UsageError(f"corpus directory not found: {corpus}")
    if not corpus_files(corpus):
        raise UsageError(f"{corpus}: nothing to verify")
    numbers = _criteria(args.criteria)
    try:
        run = acceptance.run_corpus(corpus, args.tolerance_profile, args.jobs, args.seed)
    except NetworkError as exc:
        raise UsageError(str(exc)) from exc
    scenarios = []
    for entry in run.entries:
        rep = entry.report
        print(f"scenario {rep.scenario}: {rep.status}" + "".join(f"\n  failed: {f}" for f in rep.failures()))
        scenarios.append(rep.to_dict())
    results = acceptance.run_criteria(numbers, corpus, args.tolerance_profile, args.jobs, echo=print)
    passed = all(s["status"] == "pass" for s in scenarios) and all(r.ok for r in results)
    report = {
        "status": "pass" if passed else "fail",
        "corpus": sorted(s["scenario"] for s in scenarios),
        "scenarios": scenarios,
        "criteria": [r.to_dict() for r in results],
    }
    _write(args.out, "verify_report.json", json_dump(report) + "\n")
    print(f"verify: {report['status']} ({len(scenarios)} scenarios, {len(results)} criteria)")
    return EXIT_PASS if passed else EXIT_FAIL


def cmd_decompose(args) -> int:
    sc = _load(args.scenario, args.seed)
    if sc.kind == "transportation":
        raise UsageError("decompose needs a shortest-path scenario")
    try:
        dec = analysis.path_decomposition(sc.network)
        doc, code = {"scenario": sc.id, "status": "ok", "decomposition": dec.to_dict()}, EXIT_PASS
    except analysis.DecompositionError as exc:
        doc = {"scenario": sc.id, "status": "error", "error": {"type": type(exc).__name__, "message": str(exc)}}
        code = EXIT_FAIL
    text = json_dump(doc) + "\n"
    _write(args.out, "decomposition.json", text)
    sys.stdout.write(text)
    return code


def cmd_wheatstone_sweep(args) -> int:
    if args.n < 1:
        raise UsageError("--n must be positive")
    kw = {k: v for k, v in (("dt", args.dt), ("t_end", args.t_end)) if v is not None}
    if args.method not in (None, "rk4"):
        raise UsageError("the sweep integrates with rk4")
    records = wheatstone.sweep(args.n, seed=args.seed, **kw)
    _write(args.out, "wheatstone_sweep.csv", wheatstone.sweep_csv(records))
    labels: dict[str, int] = {}
    for r in records:
        labels[r.stabilized_as] = labels.get(r.stabilized_as, 0) + 1
    bad = [i for i, r in enumerate(records) if not r.audit.ok or r.stabilized_as == "unstable"]
    summary = {
        "trajectories": len(records),
        "labels": dict(sorted(labels.items())),
        "max_changes": max(r.changes for r in records),
        "failing": bad,
        "status": "fail" if bad else "pass",
    }
    _write(args.out, "wheatstone_summary.json", json_dump(summary) + "\n")
    print(f"wheatstone-sweep: {summary['status']} {summary['labels']}")
    return EXIT_FAIL if bad else EXIT_PASS


def cmd_transport(args) -> int:
    tol = Tolerances.profile(args.tolerance_profile)
    if args.scenario is not None:
        sc = _load(args.scenario, args.seed)
        if sc.kind != "transportation":
            raise UsageError("transport needs a scenario with an 'anchor' node")
        rep, traj = run_scenario(sc, tol, _overrides(args))
        if traj is not None:
            _write(args.out, "trajectory.csv", trajectory_csv(traj))
            _write(args.out, "monitors.csv", monitor_csv(traj))
            oracle = transportation.min_cost_oracle(sc.instance)
            rep.tables["transport"] = transportation.transport_convergence_report(traj, sc.instance, oracle).to_dict()
        _write(args.out, "report.json", rep.to_json() + "\n")
        print(f"{sc.id}: {rep.status}")
        return EXIT_PASS if rep.passed else EXIT_FAIL
    if args.instances < 1:
        raise UsageError("give a scenario file or --instances N")
    try:
        config = replace(acceptance.TRANSPORT_CONFIG, **_overrides(args))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    rng = np.random.default_rng(args.seed)
    rows, failing = [], 0
    for i in range(args.instances):
        net = transportation.random_instance(rng, n=int(rng.integers(3, 7)), extra_edges=int(rng.integers(0, 4)))
        inst = transportation.build_instance(net, net.nodes[0])
        oracle = transportation.min_cost_oracle(inst)
        traj = integrate(inst.extended, np.ones(inst.extended.m), config, monitors=False,
                         until=transportation.forest_settled(inst.extended))
        rep = transportation.transport_convergence_report(traj, inst, oracle)
        ok = rep.passed(tol.oracle_cost, tol.aux_flow)
        failing += not ok
        row = rep.to_dict()
        row.pop("residual_curve")
        rows.append({"instance": i, "t_final": float(traj.t[-1]), "passed": ok, **row})
    status = "fail" if failing else "pass"
    _write(args.out, "transport_report.json", json_dump({"status": status, "instances": rows}) + "\n")
    print(f"transport: {status} ({args.instances - failing}/{args.instances} within tolerance)")
    return EXIT_FAIL if failing else EXIT_PASS


COMMANDS = {
    "simulate": cmd_simulate,
    "verify": cmd_verify,
    "decompose": cmd_decompose,
    "wheatstone-sweep": cmd_wheatstone_sweep,
    "transport": cmd_transport,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"physarum: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"physarum: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, NetworkError) as exc:
        print(f"physarum: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
