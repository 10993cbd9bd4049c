"""Run every property suite at a given scale and print a timing table."""

import argparse
import time

from defectlab.suites import SCALES, SUITES, run_suite


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--scale", choices=SCALES, default="desk")
    args = ap.parse_args()
    ok = True
    for name in SUITES:
        t0 = time.perf_counter()
        res = run_suite(name, args.seed, args.scale)
        dt = time.perf_counter() - t0
        ok &= res["passed"]
        for prop, p in res["suites"][name].items():
            print(f"{name:13s} {prop:38s} {p['checked']:6d} checked {p['failures']:4d} failed")
        print(f"{name:13s} {'':38s} {dt:8.2f} s")
    raise SystemExit(0 if ok else 1)


if __name__ == "__main__":
    main()
