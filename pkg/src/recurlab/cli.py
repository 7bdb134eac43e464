"""Command-line front end: `recurlab <subcommand> ...`.

Exit codes: 0 success or agreement, 2 config or usage error, 3 verdict
disagreement (or a map that fails the expansion check), 4 inconclusive,
5 numerical failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig, csv_text, dumps, fmt_float, load_map_config, write_json
from .errors import (ConfigError, DomainError, NumericalFailure, PrecisionExhausted,
                     RangeError, RecurlabError, RefinementLimit, SingularMatrix,
                     UnsupportedDimension, UnsupportedExactPath)
from .torus_maps import MatrixTorusMap, derive_seed, required_precision
from .targets import hyperboloid_volume, hyperboloid_volume_bounds, torus_distance

EXIT_OK, EXIT_CONFIG, EXIT_DISAGREE, EXIT_INCONCLUSIVE, EXIT_NUMERIC = 0, 2, 3, 4, 5


def _load_map(path):
    return MatrixTorusMap.from_config(load_map_config(path))


def _emit(text, out):
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_validate_map(args):
    tmap = _load_map(args.config)
    cert = tmap.certificate
    info = cert.to_dict()
    if args.N is not None:
        info["bits_required"] = required_precision(tmap, args.N).bits_required
    print(dumps(info), end="")
    moduli = ", ".join(f"{m:.10f}" for m in cert.eigen_moduli)
    print(f"eigen moduli [{moduli}]; expanding={cert.passes}")
    return EXIT_OK if cert.passes else EXIT_DISAGREE


def cmd_partition(args):
    from .partition import compute_pieces, partition_svg, refine_cylinders

    tmap = _load_map(args.config)
    fam = compute_pieces(tmap)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    info = fam.to_dict()
    if args.order > 1:
        cyl = refine_cylinders(tmap, fam, args.order)
        info["cylinders"] = {"order": args.order, "count": len(cyl)}
    write_json(out / "partition.json", info)
    if tmap.dim == 2:
        (out / "partition.svg").write_text(partition_svg(fam), encoding="utf-8")
    print(f"{fam.Q} pieces, total area {fam.total_area():.12f}, K <= {fam.K_bound}")
    return EXIT_OK


def cmd_volume(args):
    d = args.d
    deltas = [float(v) for v in args.deltas.split(",") if v.strip()]
    if d < 1 or any(v < 0 for v in deltas):
        raise ConfigError("need d >= 1 and non-negative deltas")
    rng = np.random.default_rng(derive_seed(args.seed, 0))
    rows = []
    for delta in deltas:
        exact = hyperboloid_volume(d, delta)
        prod = np.ones(args.samples)
        for _ in range(d):
            prod *= torus_distance(rng.random(args.samples), 0.0)
        p = float(np.mean(prod < delta))
        sigma = float(np.sqrt(p * (1 - p) / args.samples))
        upper = hyperboloid_volume_bounds(d, delta)[1] if 0 < delta < 1 else float("nan")
        rows.append((fmt_float(delta), fmt_float(exact), fmt_float(p), fmt_float(sigma),
                     fmt_float(upper)))
    _emit(csv_text(("delta", "closed_form", "mc_estimate", "mc_sigma", "upper_bound"), rows),
          args.out)
    return EXIT_OK


def cmd_ulam(args):
    from .measure_tools import density_bound_check, ulam_density

    tmap = _load_map(args.config)
    grid = ulam_density(tmap, args.resolution, args.seed, args.samples_per_cell)
    d = grid.dim
    header = [f"i{k}" for k in range(d)] + [f"x{k}" for k in range(d)] + ["h"]
    rows = [(*idx, *(fmt_float(c) for c in ctr), fmt_float(h))
            for idx, ctr, h in grid.to_rows()]
    _emit(csv_text(header, rows), args.out)
    b = density_bound_check(grid)
    print(f"h in [{b.h_min:.6g}, {b.h_max:.6g}], c = {b.c}, iterations {grid.iterations}",
          file=sys.stderr if not args.out else sys.stdout)
    return EXIT_OK


def _parse_lags(text):
    lags = []
    for part in text.split(","):
        if "-" in part:
            a, b = part.split("-")
            lags.extend(range(int(a), int(b) + 1))
        elif part.strip():
            lags.append(int(part))
    return lags


def cmd_mixing(args):
    from .measure_tools import estimate_mixing

    tmap = _load_map(args.config)
    prof = estimate_mixing(tmap, None, _parse_lags(args.lags), args.samples, args.seed)
    c = "" if prof.c is None else fmt_float(prof.c)
    tau = "" if prof.tau is None else fmt_float(prof.tau)
    rows = [(n, fmt_float(p), fmt_float(prof.noise_floor), c, tau) for n, p in prof.to_rows()]
    _emit(csv_text(("lag", "phi", "noise_floor", "c", "tau"), rows), args.out)
    msg = f"tau = {tau or 'n/a'}, c = {c or 'n/a'}"
    if prof.note:
        msg += f" ({prof.note})"
    print(msg, file=sys.stderr if not args.out else sys.stdout)
    return EXIT_OK


def _threads(args):
    if args.threads is not None:
        return args.threads
    env = os.environ.get("RECURLAB_THREADS")
    if env:
        try:
            return max(int(env), 1)
        except ValueError as exc:
            raise ConfigError("RECURLAB_THREADS must be an integer") from exc
    return 1


def cmd_run(args):
    from .experiments import run_experiment, write_outputs

    config = RunConfig.from_toml(args.config)
    result = run_experiment(config, _threads(args))
    out = write_outputs(result, args.out or config.output_dir)
    r = result.report
    print(f"M={r.M} N={r.N} S_N={r.S_N:.6g} mean_Z={r.mean_Z:.6g} "
          f"hit>=1 {r.fraction_hit_ge[1]:.4f} predicted {r.predicted}, "
          f"empirical {r.empirical_verdict} -> {out}")
    return result.verdict.exit_code


def build_parser():
    p = argparse.ArgumentParser(prog="recurlab",
                                description="Twisted recurrence experiments on the torus.")
    sub = p.add_subparsers(dest="command")

    s = sub.add_parser("validate-map", help="expansion certificate of a matrix map")
    s.add_argument("config")
    s.add_argument("--N", type=int, default=None, help="also report the precision budget")
    s.set_defaults(func=cmd_validate_map)

    s = sub.add_parser("partition", help="pieces of a matrix map, as JSON and SVG")
    s.add_argument("config")
    s.add_argument("--order", type=int, default=1)
    s.add_argument("--out", default="partition_out")
    s.set_defaults(func=cmd_partition)

    s = sub.add_parser("volume", help="hyperboloid volume table (CSV)")
    s.add_argument("--d", type=int, required=True)
    s.add_argument("--deltas", required=True, help="comma-separated list")
    s.add_argument("--samples", type=int, default=1_000_000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_volume)

    s = sub.add_parser("ulam", help="invariant density by Ulam's method (CSV)")
    s.add_argument("config")
    s.add_argument("--resolution", type=int, default=256)
    s.add_argument("--samples-per-cell", type=int, default=64)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_ulam)

    s = sub.add_parser("mixing", help="empirical correlation decay (CSV)")
    s.add_argument("config")
    s.add_argument("--lags", default="1-20")
    s.add_argument("--samples", type=int, default=100_000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_mixing)

    s = sub.add_parser("run", help="full hit-count experiment from a TOML config")
    s.add_argument("config")
    s.add_argument("--threads", type=int, default=None)
    s.add_argument("--out", default=None, help="override the config's output_dir")
    s.set_defaults(func=cmd_run)
    return p


def main(argv=None):
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    if not getattr(args, "func", None):
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except (NumericalFailure, PrecisionExhausted) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, DomainError, RangeError, SingularMatrix, UnsupportedExactPath,
            UnsupportedDimension, RefinementLimit, RecurlabError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
