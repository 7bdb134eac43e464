import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from recurlab.config import RunConfig, dumps
from recurlab.errors import ConfigError
from recurlab.experiments import (INCONCLUSIVE, ONE_LIKE, ZERO_LIKE, HitRecord,
                                  hit_statistics, orbit_hit_lags, pair_correlation_check,
                                  quasi_independence_check, run_experiment,
                                  run_hit_experiment, zero_one_verdict)
from recurlab.measure_tools import Box
from recurlab.targets import (CONVERGENT, DIVERGENT, UNDETERMINED, RectTarget,
                              build_schedule)
from recurlab.torus_maps import MatrixTorusMap, TorusPoint
from recurlab.twists import TwistFunction

DBL = MatrixTorusMap.doubling()
TWO_I = MatrixTorusMap.scaled_identity(2)
ID1 = TwistFunction.identity(1)


def table(values, d=1):
    return build_schedule("rect-table", {"table": values}, d=d)


def records(zs, N):
    return [HitRecord(i, {}, tuple(range(1, z + 1)), N) for i, z in enumerate(zs)]


def test_doubling_one_third_exact():
    lags = orbit_hit_lags(DBL, ID1, table([0.1] * 10), TorusPoint.lattice((1,), 3), 10)
    assert lags == (2, 4, 6, 8, 10)


def brute_force_swap_hits():
    # orbit of (1/5, 2/5) under 2I against the swapped centre (2/5, 1/5), radius 3/10
    from fractions import Fraction as F

    x = (F(1, 5), F(2, 5))
    c = (x[1], x[0])
    out = []
    y = x
    for n in range(1, 5):
        y = tuple((2 * v) % 1 for v in y)
        dist = [min((a - b) % 1, 1 - (a - b) % 1) for a, b in zip(y, c)]
        if all(v < F(3, 10) for v in dist):
            out.append(n)
    return tuple(out)


def test_swap_example_against_brute_force():
    expected = brute_force_swap_hits()
    assert expected == (3, 4)
    got = orbit_hit_lags(TWO_I, TwistFunction.permutation([2, 1]),
                         table([[0.3, 0.3]] * 4, d=2), TorusPoint.lattice((1, 2), 5), 4)
    assert got == expected


def test_zero_schedule_never_hits():
    recs = run_hit_experiment(DBL, ID1, table([0.0] * 30), 50, 30, seed=0)
    assert all(r.Z == 0 for r in recs)


def test_fast_path_matches_exact_oracle():
    sched = build_schedule("rect-isotropic", {"c": 0.3, "alpha": 0.3}, d=2)
    twist = TwistFunction.permutation([2, 1])
    recs = run_hit_experiment(TWO_I, twist, sched, 40, 60, seed=4)
    for r in recs:
        x = TorusPoint.lattice(tuple(r.initial["numerators"]), r.initial["modulus"],
                               check_prime=False)
        assert r.hit_lags == orbit_hit_lags(TWO_I, twist, sched, x, 60)


def test_high_precision_path_runs_on_irrational_map():
    sched = build_schedule("rect-isotropic", {"c": 0.3, "alpha": 0.5}, d=2)
    recs = run_hit_experiment(MatrixTorusMap.sqrt2_example(), TwistFunction.identity(2), sched,
                              20, 40, seed=0, arithmetic_mode="auto")
    assert len(recs) == 20 and recs[0].initial["denominator_bits"] >= 53


def test_measure_one_target_always_hit():
    vals = [0.0, 0.0, 0.5, 0.0, 0.0]
    recs = run_hit_experiment(DBL, ID1, table(vals), 100, 5, seed=1)
    assert all(r.hit_lags == (3,) for r in recs)


def test_threads_do_not_change_records():
    sched = build_schedule("rect-isotropic", {"c": 0.25, "alpha": 1.0}, d=1)
    a = run_hit_experiment(DBL, ID1, sched, 600, 200, seed=9, threads=1)
    b = run_hit_experiment(DBL, ID1, sched, 600, 200, seed=9, threads=4)
    assert [(r.sample_index, r.hit_lags) for r in a] == [(r.sample_index, r.hit_lags) for r in b]


def test_larger_N_extends_hit_lags():
    sched = build_schedule("rect-isotropic", {"c": 0.25, "alpha": 0.5}, d=1)
    short = run_hit_experiment(DBL, ID1, sched, 100, 50, seed=2)
    long = run_hit_experiment(DBL, ID1, sched, 100, 120, seed=2)
    for s, l in zip(short, long):
        assert l.hit_lags[:s.Z] == s.hit_lags
        assert s.Z <= l.Z


def test_lattice_guard():
    with pytest.raises(ConfigError):
        run_hit_experiment(DBL, ID1, table([1e-8] * 5), 5, 5, seed=0, prime_bits=31)


def test_dimension_mismatch():
    with pytest.raises(ConfigError):
        run_hit_experiment(TWO_I, ID1, table([0.1]), 5, 1)


def test_hit_record_validation():
    with pytest.raises(ValueError):
        HitRecord(0, {}, (3, 2), 5)
    with pytest.raises(ValueError):
        HitRecord(0, {}, (6,), 5)


def test_statistics_all_zero():
    rep = hit_statistics(records([0] * 50, 100), np.linspace(0.01, 1, 100),
                         declared=CONVERGENT)
    assert rep.fraction_hit_ge[1] == 0
    assert rep.empirical_verdict == ZERO_LIKE and rep.agreement is True


def test_statistics_all_hits():
    N = 40
    rep = hit_statistics(records([N] * 20, N), np.arange(1, N + 1, dtype=float),
                         declared=DIVERGENT)
    assert rep.mean_Z == N
    assert rep.empirical_verdict == ONE_LIKE and rep.agreement is True


def test_statistics_inconclusive_and_disagreement():
    N = 100
    S = np.full(N, 5.0)
    # half the samples hit a lot, half never: neither law fits
    recs = [HitRecord(i, {}, tuple(range(1, 81)) if i % 2 else (), N) for i in range(40)]
    rep = hit_statistics(recs, S, declared=DIVERGENT)
    assert rep.empirical_verdict == INCONCLUSIVE
    assert zero_one_verdict(rep).exit_code == 4
    rep = hit_statistics(records([0] * 10, N), S, declared=DIVERGENT)
    v = zero_one_verdict(rep)
    assert v.agreement is False and v.exit_code == 3


def test_undetermined_schedule_has_no_prediction():
    rep = hit_statistics(records([1] * 10, 10), np.ones(10), declared=UNDETERMINED)
    v = zero_one_verdict(rep)
    assert v.predicted == "no prediction" and v.agreement is None


@settings(max_examples=60)
@given(st.lists(st.integers(0, 30), min_size=1, max_size=40))
def test_fraction_conservation(zs):
    rep = hit_statistics(records(zs, 30), np.linspace(0.1, 3, 30))
    f = rep.fraction_hit_ge
    assert 1 >= f[1] >= f[2] >= f[5] >= 0
    assert all(0 <= v <= 1 for v in rep.tail_fraction.values())
    assert rep.mean_Z <= 30


def test_quasi_independence_doubling():
    rows = quasi_independence_check(DBL, Box([0.0], [0.5]), ID1, 0.05, range(10, 21),
                                    100_000, seed=0, arithmetic_mode="high-precision")
    ratios = np.array([r.ratio for r in rows])
    assert np.all((ratios >= 0.5) & (ratios <= 2))
    assert np.mean((ratios >= 0.8) & (ratios <= 1.25)) >= 0.95


def test_quasi_independence_lag_zero_constant_twist():
    y = [0.37]
    B = RectTarget(y, [0.05])
    rows = quasi_independence_check(DBL, B, TwistFunction.constant(y), 0.05, [0], 20_000,
                                    seed=0, arithmetic_mode="high-precision")
    assert rows[0].ratio == pytest.approx(1 / (2 * 0.05), rel=1e-12)


def test_quasi_independence_measure_one_target():
    rows = quasi_independence_check(DBL, Box([0.2], [0.6]), ID1, 0.5, [3, 7], 10_000,
                                    seed=0, arithmetic_mode="high-precision")
    assert all(r.ratio == pytest.approx(1.0, rel=1e-12) for r in rows)


def test_pair_correlation_independent_synthetic():
    rng = np.random.default_rng(0)
    M, pm, pn = 200_000, 0.2, 0.3
    hm, hn = rng.random(M) < pm, rng.random(M) < pn
    recs = [HitRecord(i, {}, tuple(n for n, h in ((5, a), (9, b)) if h), 10)
            for i, (a, b) in enumerate(zip(hm, hn))]
    rep = pair_correlation_check(recs, [(5, 9), (9, 9)])
    indep, degen = rep["pairs"]
    # P(m and n) / (P(m) P(n)) with phi = 0
    assert indep.implied_C == pytest.approx(1.0, abs=0.03)
    assert degen.degenerate and degen.implied_C == pytest.approx(1 / degen.p_n)


def test_pair_correlation_doubling_bound():
    sched = table([0.05] * 20)
    recs = run_hit_experiment(DBL, ID1, sched, 100_000, 20, seed=3,
                              arithmetic_mode="high-precision")
    rep = pair_correlation_check(recs, [(10, 20)])
    assert rep["max_C"] <= 4


@pytest.fixture(scope="module")
def small_config():
    return RunConfig(map={"matrix": [[2]], "exact": True}, twist={"kind": "identity"},
                     schedule={"kind": "rect-isotropic", "c": 0.25, "alpha": 1.0,
                               "threshold": True},
                     M=300, N=300, seed=5)


def test_report_round_trips_config(small_config):
    res = run_experiment(small_config)
    echo = json.loads(dumps(res.report.to_dict()))["config"]
    assert RunConfig.from_dict(echo) == small_config


def test_report_deterministic(small_config):
    a = dumps(run_experiment(small_config, threads=1).report.to_dict())
    b = dumps(run_experiment(small_config, threads=3).report.to_dict())
    assert a == b


def test_report_measure_sum_matches_schedule(small_config):
    res = run_experiment(small_config)
    exact = sum(1 / (2 * n) for n in range(5, 301))
    assert res.report.S_N == pytest.approx(exact, rel=1e-12)
    assert res.mean_curve[-1] == pytest.approx(res.report.mean_Z)
