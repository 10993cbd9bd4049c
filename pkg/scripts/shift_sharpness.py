"""Index, corner rank and nilpotent type of the shift for a range of dimensions."""

import argparse

from defectlab.channel import shift
from defectlab.stabilization import analyze


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--max-dim", type=int, default=12)
    args = ap.parse_args()
    print(f"{'dim':>4} {'index':>6} {'rank Q':>7} {'maximal':>8}  type")
    for d in range(2, args.max_dim + 1):
        rep = analyze(shift(d))
        print(f"{d:>4} {rep.index:>6} {rep.corner_rank:>7} {str(rep.is_maximal):>8}  {rep.nilpotent_type}")


if __name__ == "__main__":
    main()
