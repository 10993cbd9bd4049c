"""Exhaustive digraph sweep over every zero pattern on up to four atoms.

Each pattern gets random rational magnitudes and is checked with the natural
defect and a random one: the exact-iteration verdict and index must match the
walk-length prediction, and the orbit supports must match k-step reachability.
Takes a couple of minutes; the default test run covers up to three atoms.
"""

import argparse
import json
import time

from defectlab.suites import digraph_suite


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--max-atoms", type=int, default=4)
    ap.add_argument("--random", type=int, default=2000, help="extra random patterns on 4 and 5 atoms")
    args = ap.parse_args()
    t0 = time.perf_counter()
    verdict, supports = digraph_suite(args.seed, exhaustive_max=args.max_atoms, random_count=args.random)
    elapsed = time.perf_counter() - t0
    print(json.dumps({"verdict": verdict.to_json(), "supports": supports.to_json()}, indent=2))
    print(f"{verdict.checked} cases in {elapsed:.1f} s, {verdict.failures + supports.failures} failures")
    raise SystemExit(0 if verdict.passed and supports.passed else 1)


if __name__ == "__main__":
    main()
