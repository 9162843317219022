"""Distance between the simulated Regev-sample state and its closed form as R grows.

Also prints the same distance with colliding lattice vectors added coherently,
which isolates the effect of the discarded wrap-around register.
"""
import argparse

import numpy as np

from qlwe_lab import reductions as rd


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--q", type=int, default=5)
    ap.add_argument("--r", type=float, default=48.0)
    ap.add_argument("--alpha", type=float, default=0.16)
    ap.add_argument("--x", type=float, default=3 + 1 / 64)
    ap.add_argument("--R", type=int, nargs="+", default=[32, 64, 96, 128, 192, 256, 512])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    B = np.array([[1.0]])
    grid = rd.width_grid(args.alpha, args.q, 2)
    print("sigma      " + " ".join(f"R={R:<8}" for R in args.R))
    for sig in grid:
        row, coh = [], []
        for R in args.R:
            rec = rd.regev_generate_sample(B, [args.x], args.q, args.alpha, sig, args.r, R,
                                           np.random.default_rng(args.seed))
            row.append(rd.regev_distance(rec))
            rec = rd.regev_generate_sample(B, [args.x], args.q, args.alpha, sig, args.r, R,
                                           np.random.default_rng(args.seed), coherent_wrap=True)
            coh.append(rd.regev_distance(rec))
        print(f"{sig:<10.4f} " + " ".join(f"{d:<10.3g}" for d in row))
        print(f"{'coherent':<10} " + " ".join(f"{d:<10.3g}" for d in coh))


if __name__ == "__main__":
    main()
