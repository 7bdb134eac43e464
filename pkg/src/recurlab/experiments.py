"""Monte Carlo hit-count experiments for twisted recurrence targets.

A sample x hits at lag n when T^n x lies in the target centred at f(x) with
size schedule(n).  Z_N(x) counts hits for n <= N.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .config import RunConfig, VerdictThresholds, csv_text, write_json
from .errors import ConfigError
from .targets import (CONVERGENT, DIVERGENT, UNDETERMINED, DeltaSchedule, RectTarget,
                      schedule_from_config, torus_distance, volume_partial_sums)
from .torus_maps import MatrixTorusMap, TorusPoint, apply, make_ensemble
from .twists import TwistFunction

CHUNK = 250
LATTICE_GUARD_BITS = 10
ONE_LIKE, ZERO_LIKE, INCONCLUSIVE = "one-like", "zero-like", "inconclusive"
WINDOW_NOTE = ("the mean-Z window is a heuristic borrowed from quasi-independence "
               "bounds; a finite run cannot observe infinitely many hits")


@dataclass(frozen=True)
class HitRecord:
    sample_index: int
    initial: dict
    hit_lags: tuple
    N: int

    def __post_init__(self):
        lags = self.hit_lags
        if any(b <= a for a, b in zip(lags, lags[1:])) or (lags and not 1 <= lags[0]) \
                or (lags and lags[-1] > self.N):
            raise ValueError("hit_lags must be strictly increasing within 1..N")

    @property
    def Z(self):
        return len(self.hit_lags)


def _is_hyperboloid(schedule):
    return isinstance(schedule, DeltaSchedule)


def _hits(Xn, centers, size, hyper):
    dist = torus_distance(Xn, centers)
    if hyper:
        return np.prod(dist, axis=1) < size
    return np.all((dist < size) | (size >= 0.5), axis=1)


def _exact_dist(xn, c):
    diff = (xn - c) % 1
    return min(diff, 1 - diff)


def orbit_hit_lags(tmap, twist, schedule, x, N):
    """Hit lags of a single point, with exact rational tests for lattice points."""
    sizes = schedule.values(N) if hasattr(schedule, "values") else schedule
    hyper = _is_hyperboloid(schedule)
    fx = twist.evaluate(x)
    c = fx.as_fractions() if fx.is_lattice else [Fraction(float(v)) for v in fx.as_floats()]
    hits = []
    y = x
    for n in range(1, N + 1):
        y = apply(tmap, y)
        if y.is_lattice:
            pos = y.as_fractions()
        else:
            pos = [Fraction(float(v)) for v in y.as_floats()]
        dist = [_exact_dist(p, q) for p, q in zip(pos, c)]
        s = sizes[n - 1]
        if hyper:
            prod = Fraction(1)
            for v in dist:
                prod *= v
            hit = prod < Fraction(float(s))
        else:
            hit = all(r >= 0.5 or v < Fraction(float(r)) for v, r in zip(dist, np.atleast_1d(s)))
        if hit:
            hits.append(n)
    return tuple(hits)


def _run_chunk(tmap, twist, sizes, hyper, indices, seed, N, mode, prime_bits):
    ens = make_ensemble(tmap, indices, seed, N, mode=mode, prime_bits=prime_bits)
    if ens.mode == "exact-lattice":
        rmin = _min_positive(sizes)
        if rmin is not None and rmin < 2.0 ** LATTICE_GUARD_BITS / ens.min_modulus:
            raise ConfigError("lattice guard: smallest target radius is below 2^10/p; "
                              "raise prime_bits")
    initial = [ens.describe(i) for i in range(len(indices))]
    X0 = ens.floats()
    centers = twist.evaluate_array(X0)
    per_sample = [[] for _ in indices]
    for n in range(1, N + 1):
        ens.step()
        s = sizes[n - 1]
        if not np.any(s > 0):
            continue
        hit = _hits(ens.floats(), centers, s, hyper)
        for i in np.flatnonzero(hit):
            per_sample[i].append(n)
    return [HitRecord(int(idx), init, tuple(h), N)
            for idx, init, h in zip(indices, initial, per_sample)]


def _min_positive(sizes):
    s = np.asarray(sizes, dtype=float)
    pos = s[s > 0]
    return float(pos.min()) if pos.size else None


def run_hit_experiment(tmap, twist, schedule, M, N, seed=0, arithmetic_mode="auto",
                       prime_bits=61, threads=1):
    """HitRecords for samples 0..M-1; output does not depend on `threads`."""
    if twist.dim != tmap.dim or schedule.d != tmap.dim:
        raise ConfigError("map, twist and schedule dimensions differ")
    sizes = schedule.values(N)
    hyper = _is_hyperboloid(schedule)
    chunks = [list(range(a, min(a + CHUNK, M))) for a in range(0, M, CHUNK)]
    job = lambda idx: _run_chunk(tmap, twist, sizes, hyper, idx, seed, N,
                                 arithmetic_mode, prime_bits)
    if threads <= 1:
        parts = [job(c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(job, chunks))
    return [r for part in parts for r in part]


# ---------------------------------------------------------------------------
# statistics and verdicts

@dataclass(frozen=True)
class ExperimentReport:
    config: dict
    M: int
    N: int
    S_N: float
    S_inf_estimate: float
    mean_Z: float
    var_Z: float
    fraction_hit_ge: dict
    tail_fraction: dict
    predicted: str
    empirical_verdict: str
    agreement: bool | None
    notes: tuple = ()
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "config": self.config,
            "M": self.M,
            "N": self.N,
            "S_N": self.S_N,
            "S_inf_estimate": self.S_inf_estimate,
            "mean_Z": self.mean_Z,
            "var_Z": self.var_Z,
            "fraction_hit_ge": {str(k): v for k, v in self.fraction_hit_ge.items()},
            "tail_fraction": {str(k): v for k, v in self.tail_fraction.items()},
            "predicted": self.predicted,
            "empirical_verdict": self.empirical_verdict,
            "agreement": self.agreement,
            "notes": list(self.notes),
            **self.extra,
        }


def _predicted(declared):
    return {DIVERGENT: "one", CONVERGENT: "zero"}.get(declared, "no prediction")


def hit_statistics(records, measure_sums, s_inf=None, declared=UNDETERMINED,
                   thresholds=VerdictThresholds(), tail_points=(), config=None):
    """Aggregate HitRecords into an ExperimentReport.

    measure_sums is the cumulative target measure S_1..S_N; s_inf estimates
    the full series (defaults to S_N).
    """
    if not records:
        raise ValueError("records must be non-empty")
    N = records[0].N
    S = np.asarray(measure_sums, dtype=float)
    S_N = float(S[N - 1]) if S.size >= N else float(S[-1])
    s_inf = S_N if s_inf is None else float(s_inf)
    Z = np.array([r.Z for r in records], dtype=float)
    M = len(records)
    last = np.array([r.hit_lags[-1] if r.hit_lags else 0 for r in records])
    frac = {k: float(np.mean(Z >= k)) for k in (1, 2, 5)}
    points = sorted({N // 2, *(int(t) for t in tail_points)})
    tail = {t: float(np.mean(last > t)) for t in points}
    mean_Z = float(Z.mean())
    var_Z = float(Z.var(ddof=1)) if M > 1 else 0.0
    lo, hi = thresholds.window
    if frac[1] >= thresholds.hit_fraction and lo * S_N <= mean_Z <= hi * S_N:
        empirical = ONE_LIKE
    elif mean_Z <= min(thresholds.s_inf_factor * s_inf, math.sqrt(N)) \
            and tail[N // 2] <= thresholds.tail:
        empirical = ZERO_LIKE
    else:
        empirical = INCONCLUSIVE
    report = ExperimentReport(config or {}, M, N, S_N, s_inf, mean_Z, var_Z, frac, tail,
                              _predicted(declared), empirical, None, (WINDOW_NOTE,))
    return zero_one_verdict(report).report


@dataclass(frozen=True)
class Verdict:
    predicted: str
    empirical: str
    agreement: bool | None
    report: ExperimentReport

    @property
    def exit_code(self):
        if self.empirical == INCONCLUSIVE:
            return 4
        if self.agreement is False:
            return 3
        return 0


def zero_one_verdict(report):
    """Compare the predicted law with the empirical verdict."""
    pred = report.predicted
    if pred == "one":
        agree = report.empirical_verdict == ONE_LIKE
    elif pred == "zero":
        agree = report.empirical_verdict == ZERO_LIKE
    else:
        agree = None
    rep = ExperimentReport(**{**report.__dict__, "agreement": agree})
    return Verdict(pred, report.empirical_verdict, agree, rep)


# ---------------------------------------------------------------------------
# quasi-independence and pair correlations

def _in_set(B, X):
    if isinstance(B, RectTarget):
        dist = torus_distance(X, B.center)
        return np.all((dist < B.radii) | (B.radii >= 0.5), axis=1)
    return B.contains(X)


@dataclass(frozen=True)
class LagRatio:
    lag: int
    ratio: float
    sigma: float
    joint: float
    denominator: float


def quasi_independence_check(tmap, B, twist, schedule, lags, M, seed=0,
                             arithmetic_mode="auto"):
    """P(x in B, T^n x in target(f(x), r_n)) / (mu(B) * m(target_n)) per lag.

    mu(B) is the sample frequency of B, so a measure-1 target gives exactly 1.
    schedule is a schedule object or a constant radius (scalar or per axis).
    """
    if not tmap.is_integer:
        raise ConfigError("exact denominators need a Lebesgue-preserving integer map")
    lags = sorted(int(n) for n in lags)
    d = tmap.dim
    has_schedule = hasattr(schedule, "values")
    if has_schedule:
        sizes = schedule.values(max(max(lags), 1))
        meas = schedule.measure_terms(max(max(lags), 1))
        size_at = lambda n: sizes[n - 1]
        meas_at = lambda n: meas[n - 1]
        hyper = _is_hyperboloid(schedule)
    else:
        r = np.broadcast_to(np.asarray(schedule, dtype=float), (d,))
        m = RectTarget(np.zeros(d), r).measure
        size_at = lambda n: r
        meas_at = lambda n: m
        hyper = False
    ens = make_ensemble(tmap, range(M), seed, max(max(lags), 1), mode=arithmetic_mode)
    X0 = ens.floats()
    inB = _in_set(B, X0)
    centers = twist.evaluate_array(X0)
    muB = float(inB.mean())
    out = []
    n = 0
    X = X0
    for lag in lags:
        while n < lag:
            ens.step()
            n += 1
            X = ens.floats()
        if lag == 0 and has_schedule:
            continue
        denom = muB * meas_at(lag)
        if denom <= 0:
            continue
        hit = inB & _hits(X, centers, size_at(lag), hyper)
        p = float(hit.mean())
        out.append(LagRatio(lag, p / denom, math.sqrt(p * (1 - p) / M) / denom, p, denom))
    return out


@dataclass(frozen=True)
class PairCorrelation:
    m: int
    n: int
    joint: float
    p_m: float
    p_n: float
    phi: float
    bound: float
    implied_C: float | None
    degenerate: bool
    note: str = ""


def pair_correlation_check(records, lag_pairs, phi=None, min_joint_hits=10):
    """Empirical joint hit rates against (P(m) + phi(n - m)) * P(n)."""
    if not records:
        raise ValueError("records must be non-empty")
    M = len(records)
    sets = [set(r.hit_lags) for r in records]
    if phi is None:
        phi_at = lambda k: 0.0
    elif hasattr(phi, "phi"):
        table = dict(zip(phi.lags, phi.phi))
        phi_at = lambda k: float(table.get(k, 0.0))
    elif callable(phi):
        phi_at = phi
    else:
        phi_at = lambda k: float(phi.get(k, 0.0))
    rows = []
    for m, n in lag_pairs:
        m, n = sorted((int(m), int(n)))
        hm = np.array([m in s for s in sets])
        hn = np.array([n in s for s in sets])
        joint_count = int(np.sum(hm & hn))
        joint, pm, pn = joint_count / M, float(hm.mean()), float(hn.mean())
        f = phi_at(n - m)
        bound = (pm + f) * pn
        C = joint / bound if bound > 0 else None
        note = ""
        if joint_count < min_joint_hits:
            note = f"only {joint_count} joint hits; C is a one-sided estimate"
        rows.append(PairCorrelation(m, n, joint, pm, pn, f, bound, C, m == n, note))
    finite = [r.implied_C for r in rows if r.implied_C is not None and not r.degenerate]
    return {"pairs": rows, "max_C": max(finite) if finite else None}


# ---------------------------------------------------------------------------
# config-driven pipeline

@dataclass(frozen=True)
class RunResult:
    report: ExperimentReport
    records: list
    mean_curve: np.ndarray
    measure_curve: np.ndarray
    verdict: Verdict


def build_run(config):
    tmap = MatrixTorusMap.from_config(config.map)
    d = tmap.dim
    twist = TwistFunction.from_config(config.twist, d)
    sched_spec = {"threshold": True, **config.schedule}
    schedule = schedule_from_config(sched_spec, d)
    return tmap, twist, schedule


def run_experiment(config, threads=1):
    tmap, twist, schedule = build_run(config)
    N = config.N
    records = run_hit_experiment(tmap, twist, schedule, config.M, N, config.seed,
                                 config.arithmetic_mode, config.prime_bits, threads)
    sums = volume_partial_sums(schedule, N)["measure"]
    s_inf = float(np.sum(schedule.measure_terms(100 * N)))
    notes_extra = {}
    if not tmap.is_integer:
        notes_extra["density_note"] = ("samples are Lebesgue-uniform; target measures "
                                       "assume the invariant density is 1")
    report = hit_statistics(records, sums, s_inf, schedule.declared_divergence,
                            config.thresholds, config=config.to_dict())
    mode = config.arithmetic_mode
    if mode == "auto":
        mode = "exact-lattice" if tmap.is_integer else "high-precision"
    extra = {"arithmetic_mode": mode,
             "declared_divergence": schedule.declared_divergence,
             "mean_Z_over_S_N": report.mean_Z / report.S_N if report.S_N > 0 else None,
             **notes_extra}
    report = ExperimentReport(**{**report.__dict__, "extra": extra})
    counts = np.zeros(N + 1)
    for r in records:
        for n in r.hit_lags:
            counts[n] += 1
    mean_curve = np.cumsum(counts[1:]) / len(records)
    verdict = zero_one_verdict(report)
    return RunResult(verdict.report, records, mean_curve, sums, verdict)


def hits_csv(records):
    rows = []
    for r in records:
        for z, n in enumerate(r.hit_lags, start=1):
            rows.append((r.sample_index, n, z))
    return csv_text(("sample_index", "n", "cumulative_z"), rows)


def cumulative_svg(mean_curve, measure_curve, width=640, height=400, pad=48):
    """Mean Z_n (solid) against S_n (dashed) as a standalone SVG."""
    N = len(mean_curve)
    top = max(float(np.max(mean_curve, initial=0)), float(np.max(measure_curve, initial=0)),
              1e-12)
    step = max(1, N // 500)
    idx = list(range(0, N, step)) + ([N - 1] if (N - 1) % step else [])

    def path(curve):
        pts = []
        for i in idx:
            x = pad + (width - 2 * pad) * (i + 1) / N
            y = height - pad - (height - 2 * pad) * float(curve[i]) / top
            pts.append(f"{x:.2f},{y:.2f}")
        return " ".join(pts)

    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">\n'
        f'<rect width="{width}" height="{height}" fill="white"/>\n'
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" '
        f'stroke="black"/>\n'
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>\n'
        f'<polyline fill="none" stroke="#1f77b4" stroke-width="1.5" '
        f'points="{path(mean_curve)}"/>\n'
        f'<polyline fill="none" stroke="#d62728" stroke-dasharray="6,4" '
        f'stroke-width="1.5" points="{path(measure_curve)}"/>\n'
        f'<text x="{pad}" y="{pad - 12}" font-size="12">mean Z_n (solid), S_n (dashed); '
        f'max {top:.4g}</text>\n'
        f'<text x="{width - pad}" y="{height - pad + 20}" font-size="12" '
        f'text-anchor="end">n = {N}</text>\n'
        "</svg>\n"
    )


def write_outputs(result, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "report.json", result.report.to_dict())
    (out / "hits.csv").write_text(hits_csv(result.records), encoding="utf-8")
    (out / "cumulative.svg").write_text(
        cumulative_svg(result.mean_curve, result.measure_curve), encoding="utf-8")
    return out


def load_and_run(path, threads=1, out_dir=None):
    config = RunConfig.from_toml(path)
    result = run_experiment(config, threads)
    write_outputs(result, out_dir or config.output_dir)
    return result
