"""Success rate of per-block secret recovery against the entry corruption rate.

Compares Monte-Carlo rates with the closed form for the solve-then-check
loop: a group of 2n clean columns must be followed by a check group with at
most floor(0.1 * 2n) bad entries.
"""
import argparse
import math

import numpy as np
from scipy import stats

from qlwe_lab import cli


def predicted(n: int, cols: int, rate: float, q: int) -> float:
    g = 2 * n
    attempts = cols // g // 2
    clean = (1 - rate) ** g
    # a corrupted entry still matches when the solve is wrong only by chance; ignore that
    ok_check = stats.binom.cdf(math.floor((1 - 0.9) * g + 1e-9), g, rate)
    per = clean * ok_check
    return 1 - (1 - per) ** attempts


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=8)
    ap.add_argument("--q", type=int, default=5)
    ap.add_argument("--cols", type=int, default=128)
    ap.add_argument("--trials", type=int, default=400)
    ap.add_argument("--rates", type=float, nargs="+", default=[0.0, 0.01, 0.02, 0.05, 0.08, 0.125])
    args = ap.parse_args()

    print("rate    empirical  predicted")
    for rate in args.rates:
        hits = sum(cli.block_recovery_trial(cli.trial_rng(0, i), args.n, args.q, args.cols, rate)
                   for i in range(args.trials))
        print(f"{rate:<7} {hits / args.trials:<10.3f} {predicted(args.n, args.cols, rate, args.q):.3f}")


if __name__ == "__main__":
    main()
