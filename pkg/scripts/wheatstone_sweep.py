"""Randomised Wheatstone trajectories: regime audit and middle-edge behaviour.

    python3 scripts/wheatstone_sweep.py [--n 500] [--seed 7] [--out out/sweep]

Prints how the middle edge ends up (label counts), the distribution of flow
reversals and any trajectory whose regime audit fails.
"""

from __future__ import annotations

import argparse
from collections import Counter
from pathlib import Path

from physarum.wheatstone import sweep, sweep_csv


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=500)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--t-end", type=float, default=40.0)
    ap.add_argument("--out", type=Path, default=None, help="directory for wheatstone_sweep.csv")
    args = ap.parse_args()

    records = sweep(args.n, seed=args.seed, t_end=args.t_end)
    labels = Counter(r.stabilized_as for r in records)
    changes = Counter(r.changes for r in records)
    print(f"{len(records)} trajectories, t_end={args.t_end:g}")
    for label, count in sorted(labels.items()):
        print(f"  {label:>16}: {count}")
    print("middle-edge reversals:", dict(sorted(changes.items())))
    bad = [(i, r) for i, r in enumerate(records) if not r.audit.ok]
    print(f"regime audit failures: {len(bad)}")
    for i, r in bad[:10]:
        print(f"  #{i} L={r.lengths} D0={r.D0} audit={r.audit}")
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "wheatstone_sweep.csv").write_text(sweep_csv(records))


if __name__ == "__main__":
    main()
