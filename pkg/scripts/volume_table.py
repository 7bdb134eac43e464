"""Hyperboloid volumes: closed form, Monte Carlo and the d 2^d delta (-log delta)^(d-1) bound.

    python3 scripts/volume_table.py [--samples 1000000] [--seed 0]
"""

import argparse
import math

import numpy as np

from recurlab.targets import hyperboloid_volume, torus_distance


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--samples", type=int, default=1_000_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    print(f"{'d':>2s} {'delta':>10s} {'exact':>10s} {'mc':>10s} {'z':>6s} {'bound':>10s}")
    for d in (1, 2, 3):
        prod = np.ones(args.samples)
        for _ in range(d):
            prod *= torus_distance(rng.random(args.samples), 0.0)
        for k in range(d, d + 9):
            delta = 2.0 ** -k
            exact = hyperboloid_volume(d, delta)
            mc = float(np.mean(prod < delta))
            sigma = math.sqrt(max(exact * (1 - exact), 1e-300) / args.samples)
            bound = d * 2 ** d * delta * (-math.log(delta)) ** (d - 1)
            print(f"{d:2d} {delta:10.3e} {exact:10.6f} {mc:10.6f} "
                  f"{(mc - exact) / sigma:6.2f} {bound:10.6f}")


if __name__ == "__main__":
    main()
