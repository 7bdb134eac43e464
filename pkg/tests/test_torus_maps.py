import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from recurlab.errors import (PrecisionExhausted, SingularMatrix, UnsupportedExactPath,
                             ConfigError)
from recurlab.torus_maps import (FixedPointEnsemble, LatticeEnsemble, MatrixTorusMap,
                                 TorusPoint, apply, make_ensemble, orbit, parse_entry,
                                 required_precision, sample_lattice_points,
                                 validate_expanding)

SQ2 = MatrixTorusMap.sqrt2_example()


def quadratic_oracle_moduli():
    # lambda^2 + lambda/2 - (3 + sqrt 2) = 0, solved independently of the library
    with mpmath.workdps(40):
        b, c = mpmath.mpf(1) / 2, -(3 + mpmath.sqrt(2))
        disc = mpmath.sqrt(b * b - 4 * c)
        return sorted(abs(r) for r in ((-b + disc) / 2, (-b - disc) / 2))


def test_parse_entry_exact_and_symbolic():
    assert parse_entry("3/2") == Fraction(3, 2)
    assert parse_entry(2) == Fraction(2)
    assert parse_entry("0.25") == Fraction(1, 4)
    assert isinstance(parse_entry("sqrt(2)"), str)
    with pytest.raises(ConfigError):
        parse_entry("__import__('os')")


def test_identity_fails_certificate():
    cert = validate_expanding(MatrixTorusMap([[1, 0], [0, 1]]))
    assert not cert.passes
    assert cert.margin == 0


def test_two_identity_certificate():
    cert = MatrixTorusMap.scaled_identity(2).certificate
    assert cert.passes
    assert cert.eigen_moduli == pytest.approx((2.0, 2.0), rel=1e-12)
    assert cert.corollary_flags["integer"] and cert.corollary_flags["diagonal"]


def test_sqrt2_example_moduli_match_oracle():
    cert = SQ2.certificate
    oracle = [float(v) for v in quadratic_oracle_moduli()]
    assert cert.passes
    assert sorted(cert.eigen_moduli) == pytest.approx(oracle, rel=1e-9)
    assert not cert.corollary_flags["integer"]


def test_singular_matrix_rejected():
    with pytest.raises(SingularMatrix):
        validate_expanding(MatrixTorusMap([[1, 2], [2, 4]]))


def test_near_unit_modulus_is_a_tie():
    assert not MatrixTorusMap([["1.0000000000001"]]).certificate.passes


@settings(max_examples=25, deadline=None)
@given(st.integers(-4, 4), st.integers(-4, 4), st.integers(-4, 4), st.integers(-4, 4),
       st.sampled_from([2, 3, "3/2", "sqrt(3)"]))
def test_scaling_multiplies_moduli(a, b, c, d, scale):
    if a * d - b * c == 0:
        return
    base = MatrixTorusMap([[a, b], [c, d]])
    s = float(mpmath.mpf(mpmath.sqrt(3)) if scale == "sqrt(3)" else Fraction(scale))
    scaled = MatrixTorusMap([[f"({v})*{scale}" if isinstance(scale, str) else v * scale
                              for v in row] for row in [[a, b], [c, d]]])
    m0 = sorted(base.certificate.eigen_moduli)
    m1 = sorted(scaled.certificate.eigen_moduli)
    assert m1 == pytest.approx([s * v for v in m0], rel=1e-9)


def test_apply_examples():
    dbl = MatrixTorusMap.doubling()
    assert float(apply(dbl, TorusPoint.from_coords([0.3], 80)).as_floats()[0]) == \
        pytest.approx(0.6, abs=1e-15)
    y = apply(SQ2, TorusPoint.from_coords([0.5, 0.5], 128)).as_floats()
    assert y == pytest.approx([0.25, math.sqrt(2) / 2], abs=1e-15)
    z = apply(SQ2, TorusPoint.from_coords([0.0, 0.0], 128)).as_floats()
    assert list(z) == [0.0, 0.0]


def test_lattice_needs_integer_matrix():
    with pytest.raises(UnsupportedExactPath):
        apply(SQ2, TorusPoint.lattice((1, 2), 5))


def test_orbit_doubling_one_third():
    pts = orbit(MatrixTorusMap.doubling(), TorusPoint.lattice((1,), 3), 4)
    assert [p.numerators[0] for p in pts] == [1, 2, 1, 2, 1]


def test_orbit_two_identity_period_four():
    pts = orbit(MatrixTorusMap.scaled_identity(2), TorusPoint.lattice((1, 2), 5), 4)
    assert [p.numerators for p in pts] == [(1, 2), (2, 4), (4, 3), (3, 1), (1, 2)]


def test_orbit_zero_steps():
    x = TorusPoint.lattice((1,), 3)
    assert orbit(MatrixTorusMap.doubling(), x, 0) == [x]


def test_float_orbit_refuses_beyond_budget():
    x = TorusPoint.from_coords([0.1], 53)
    with pytest.raises(PrecisionExhausted) as err:
        orbit(MatrixTorusMap.doubling(), x, 100)
    assert err.value.max_steps is not None and err.value.max_steps < 100


def test_required_precision_examples():
    assert required_precision(MatrixTorusMap.doubling(), 1000).bits_required == 1064
    assert required_precision(MatrixTorusMap.scaled_identity(2), 100).bits_required == 164
    # singular value oracle: sqrt of the top eigenvalue of T^T T
    T = np.array([[1.5, math.sqrt(2)], [1.0, -2.0]])
    sigma = float(np.sqrt(np.linalg.eigvalsh(T.T @ T).max()))
    assert required_precision(SQ2, 100).bits_required == math.ceil(100 * math.log2(sigma)) + 64


def test_sample_lattice_points_contract():
    dbl = MatrixTorusMap.doubling()
    assert sample_lattice_points(dbl, 0) == []
    a = sample_lattice_points(dbl, 2, seed=7)
    b = sample_lattice_points(dbl, 2, seed=7)
    assert [(p.numerators, p.modulus) for p in a] == [(p.numerators, p.modulus) for p in b]
    with pytest.raises(UnsupportedExactPath):
        sample_lattice_points(SQ2, 1)
    with pytest.raises(ConfigError):
        sample_lattice_points(dbl, 1, prime_bits=20)


def test_sample_lattice_points_uniform_mean():
    pts = sample_lattice_points(MatrixTorusMap.doubling(), 10_000, prime_bits=61, seed=3)
    assert all(p.modulus >= 2 ** 61 for p in pts)
    mean = np.mean([p.as_floats()[0] for p in pts])
    assert abs(mean - 0.5) <= 4 / math.sqrt(10_000 * 12)


def test_sample_order_independence():
    tmap = MatrixTorusMap.scaled_identity(2)
    full = LatticeEnsemble.sample(tmap, range(6), seed=11)
    part = LatticeEnsemble.sample(tmap, [4, 5], seed=11)
    assert part.describe(0) == full.describe(4)


def test_fixed_point_agrees_with_lattice_orbit():
    # x = k/p written at `bits` precision, stepped both ways
    m = MatrixTorusMap([[3, 1], [1, 2]])
    lat = LatticeEnsemble.sample(m, range(20), seed=5)
    bits = required_precision(m, 30).bits_required
    nums = [[(int(k) << bits) // int(lat.p[i, 0]) for k in lat.k[i]] for i in range(20)]
    fp = FixedPointEnsemble(m, nums, bits)
    for _ in range(30):
        lat.step()
        fp.step()
        diff = np.abs(lat.floats() - fp.floats())
        assert np.all(np.minimum(diff, 1 - diff) < 1e-12)


def test_make_ensemble_auto_modes():
    assert make_ensemble(MatrixTorusMap.doubling(), range(3), 0, 10).mode == "exact-lattice"
    assert make_ensemble(SQ2, range(3), 0, 10).mode == "high-precision"


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(0, 10 ** 6), st.integers(0, 10 ** 6),
       st.integers(0, 10 ** 6))
def test_linearity_mod_one_on_lattice(a, b, c, d):
    p = 1_000_003
    T = MatrixTorusMap([[2, 1], [1, 3]])
    x = TorusPoint.lattice((a % p, b % p), p, check_prime=False)
    y = TorusPoint.lattice((c % p, d % p), p, check_prime=False)
    s = TorusPoint.lattice(tuple((u + v) % p for u, v in zip(x.numerators, y.numerators)), p,
                           check_prime=False)
    lhs = apply(T, s).numerators
    rhs = tuple((u + v) % p for u, v in zip(apply(T, x).numerators, apply(T, y).numerators))
    assert lhs == rhs


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0, 1, exclude_max=True), min_size=2, max_size=2))
def test_apply_stays_in_unit_cube(xs):
    y = apply(SQ2, TorusPoint.from_coords(xs, 128)).as_floats()
    assert np.all((y >= 0) & (y < 1))


def test_integer_map_pushforward_is_uniform():
    rng = np.random.default_rng(0)
    X = rng.random((200_000, 2))
    Y = MatrixTorusMap([[2, 1], [1, 3]]).apply_array(X)
    counts = np.histogram2d(Y[:, 0], Y[:, 1], bins=8, range=[[0, 1], [0, 1]])[0]
    expected = len(X) / 64
    assert np.max(np.abs(counts - expected)) < 5 * math.sqrt(expected)


def test_as_floats_folds_rounding_to_one():
    x = apply(SQ2, TorusPoint.from_coords([0.0, 2.3954235310721796e-18], 128)).as_floats()
    assert np.all((x >= 0) & (x < 1))
