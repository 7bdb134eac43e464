"""Run the hit-count experiments in configs/ and print a summary table.

    python3 scripts/run_acceptance_experiments.py [--threads 4] [--out out]
"""

import argparse
from pathlib import Path

from recurlab.config import RunConfig
from recurlab.experiments import run_experiment, write_outputs

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
NAMES = ["rect_divergent", "rect_convergent", "cross_component", "hyperboloid_divergent",
         "hyperboloid_convergent"]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--out", default="out")
    args = ap.parse_args()
    print(f"{'config':24s} {'S_N':>8s} {'mean_Z':>8s} {'ratio':>6s} {'hit>=1':>7s} "
          f"{'predicted':>10s} {'empirical':>13s}")
    for name in NAMES:
        res = run_experiment(RunConfig.from_toml(CONFIGS / f"{name}.toml"), args.threads)
        write_outputs(res, Path(args.out) / name)
        r = res.report
        print(f"{name:24s} {r.S_N:8.4f} {r.mean_Z:8.4f} {r.mean_Z / r.S_N:6.3f} "
              f"{r.fraction_hit_ge[1]:7.4f} {r.predicted:>10s} {r.empirical_verdict:>13s}")


if __name__ == "__main__":
    main()
