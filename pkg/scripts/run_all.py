"""Run every registered experiment with its default parameters.

    python3 scripts/run_all.py --out runs/default --seed 0

Writes one subdirectory per experiment and prints the pass flags.
"""
import argparse
import sys
import time
from pathlib import Path

from qlwe_lab import cli


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="runs/default")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--only", nargs="*", default=None, help="subset of experiment names")
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()

    names = args.only or list(cli.EXPERIMENTS)
    failed = []
    for name in names:
        t0 = time.perf_counter()
        cfg = cli.ExperimentConfig(name, args.seed, {}, str(Path(args.out) / name), jobs=args.jobs)
        rec = cli.run(cfg)
        for k, v in sorted(rec.passes.items()):
            print(f"{'PASS' if v else 'FAIL'} {name:<22} {k}")
        print(f"     {name} took {time.perf_counter() - t0:.1f}s")
        if not rec.all_pass:
            failed.append(name)
    sys.exit(1 if failed else 0)


if __name__ == "__main__":
    main()
