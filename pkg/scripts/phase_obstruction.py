"""Bit-extraction success after the sieve, hidden phase versus known phase,
as a function of the spread of the hidden center."""
import argparse

import numpy as np

from qlwe_lab import reductions as rd
from qlwe_lab.amplitudes import SecretKey


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=2)
    ap.add_argument("--q", type=int, default=8)
    ap.add_argument("--width", type=float, default=4.0)
    ap.add_argument("--samples", type=int, default=2 ** 14)
    ap.add_argument("--step", type=float, default=0.5)
    ap.add_argument("--sigma-c", type=float, nargs="+", default=[0.0, 0.25, 0.5, 1.0, 2.0])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    print("sigma_c  unknown  known  rounds")
    for sc in args.sigma_c:
        rng = np.random.default_rng([args.seed, int(sc * 1000)])
        s = SecretKey.random(args.n, args.q, rng)
        th = (np.zeros(args.samples) if sc == 0
              else rd.hidden_center_phases(args.samples, args.q, args.step, sc, rng))
        smp = rd.phased_samples(args.n, args.q, args.width, s, th, rng)
        unk = rd.bit_extraction_success(smp, args.width, args.q, args.n, s, rng, known_phase=False)
        kn = rd.bit_extraction_success(smp, args.width, args.q, args.n, s, rng, known_phase=True)
        print(f"{sc:<8} {unk['success']:<8.3f} {kn['success']:<6.3f} {unk['rounds']}")


if __name__ == "__main__":
    main()
