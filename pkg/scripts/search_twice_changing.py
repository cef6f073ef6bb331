"""Search for a Wheatstone instance whose middle edge reverses at least twice.

    python3 scripts/search_twice_changing.py [--trials 2000] [--seed 0]

The instance frozen in corpus/wheatstone_twice_changing.json came from the
defaults below.  Prints the best instance as a scenario fragment.
"""

from __future__ import annotations

import argparse
import json

from physarum.wheatstone import EDGES, search_multiple_changes


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--t-end", type=float, default=30.0)
    ap.add_argument("--want", type=int, default=2)
    args = ap.parse_args()

    best = search_multiple_changes(args.trials, seed=args.seed, t_end=args.t_end, want=args.want)
    if best is None:
        print(f"no instance with {args.want} reversals in {args.trials} trials")
        raise SystemExit(1)
    lengths, D0, changes = best
    print(f"{changes.count} reversals at t = {', '.join(f'{t:.3f}' for t in changes.times)}")
    print(json.dumps({"lengths": dict(zip(EDGES, lengths)), "initial_diameters": dict(zip(EDGES, D0))}, indent=2))


if __name__ == "__main__":
    main()
