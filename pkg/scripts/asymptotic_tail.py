"""Convergence of partial defect sums to the asymptotic defect.

Prints the observed tail ||d_inf - sum_{k<n} T^k(d)|| next to the rate bound
C n^(m-1) r^n for a few maps.
"""

import argparse

from defectlab.channel import dephasing_decay, random_subunital, shift
from defectlab.stabilization import tail_estimate


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--steps", type=int, default=20)
    args = ap.parse_args()
    maps = {
        "dephasing:0.5": dephasing_decay(0.5),
        "dephasing:0.9": dephasing_decay(0.9),
        "shift:4": shift(4),
        f"random:3,seed={args.seed}": random_subunital(3, args.seed),
    }
    for name, T in maps.items():
        print(name)
        for n in range(1, args.steps + 1, max(1, args.steps // 10)):
            te = tail_estimate(T, n)
            print(f"  n={n:3d} tail={te.observed_tail:.3e} bound={te.rate_bound:.3e} r={te.spectral_radius:.3f} ok={te.holds}")


if __name__ == "__main__":
    main()
