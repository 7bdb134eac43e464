"""Correlation decay for a few maps, with the fitted rate where the signal clears the noise.

    python3 scripts/mixing_profile.py [--samples 100000] [--lags 1-12]
"""

import argparse

from recurlab.cli import _parse_lags
from recurlab.measure_tools import estimate_mixing
from recurlab.torus_maps import MatrixTorusMap

MAPS = {
    "doubling": MatrixTorusMap.doubling(),
    "2I": MatrixTorusMap.scaled_identity(2),
    "11/10 I": MatrixTorusMap([["11/10"]]),
    "non-integer": MatrixTorusMap.sqrt2_example(),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--samples", type=int, default=100_000)
    ap.add_argument("--lags", default="1-12")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    lags = _parse_lags(args.lags)
    for name, tmap in MAPS.items():
        prof = estimate_mixing(tmap, None, lags, args.samples, args.seed)
        phis = " ".join(f"{p:.4f}" for p in prof.phi)
        tau = "n/a" if prof.tau is None else f"{prof.tau:.3f}"
        print(f"{name:12s} floor {prof.noise_floor:.4f} tau {tau} {prof.note}")
        print(f"{'':12s} phi {phis}")


if __name__ == "__main__":
    main()
